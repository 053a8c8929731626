#include <stdio.h>
#include <stdlib.h>

#include "homodyne.h"

int main(void) {
    const size_t n = 20000;
    double *y = malloc(n * sizeof *y);
    double *phi = malloc(n * sizeof *phi);
    HdState vacuum = {HD_STATE_KIND_VACUUM, 0.0, 0.0};

    if (hd_simulate(&vacuum, 0.9, n, 1, y, phi) != HD_STATUS_OK) {
        fprintf(stderr, "simulate: %s\n", hd_last_error());
        return 1;
    }

    HdEstimatorConfig cfg = hd_estimator_config_default();
    cfg.epsilon = 0.1;
    HdResult *result = NULL;
    if (hd_estimate(y, phi, n, &cfg, &result) != HD_STATUS_OK) {
        fprintf(stderr, "estimate: %s\n", hd_last_error());
        return 1;
    }

    double re, im;
    hd_result_get(result, 0, 0, 1, &re, &im);
    printf("N_used=%zu rho_00=%.6f\n", hd_result_n_used(result), re);

    hd_result_free(result);
    free(y);
    free(phi);
    return 0;
}
