#include <math.h>
#include <stdio.h>
#include "fragcoal.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s (%s)\n", #cond, fc_last_error()); return 1; } } while (0)

int main(void) {
    FcKernel *kernel = NULL;
    CHECK(fc_kernel_from_json("{\"lambda\":0.5,\"alpha\":{\"2\":1}}", &kernel) == FC_STATUS_OK);

    double g1 = 0.0;
    CHECK(fc_solve_g1(kernel, 0.5, &g1) == FC_STATUS_OK);
    CHECK(fabs(g1 - (sqrt(1.25) - 0.5)) < 1e-12);

    FcSimulator *sim = NULL;
    CHECK(fc_simulator_new(kernel, 100, 7, &sim) == FC_STATUS_OK);
    for (int i = 0; i < 1000; i++) {
        CHECK(fc_simulator_step(sim) == FC_STATUS_OK);
    }
    uint64_t hist[101];
    size_t needed = 0;
    CHECK(fc_simulator_histogram(sim, hist, 101, &needed) == FC_STATUS_OK);
    uint64_t mass = 0;
    for (size_t k = 0; k < needed; k++) {
        mass += k * hist[k];
    }
    CHECK(mass == 100);
    CHECK(fc_simulator_histogram(sim, hist, 3, &needed) == FC_STATUS_BUFFER_TOO_SMALL);

    double p[3];
    CHECK(fc_limit_p(3, 3, p, 3, NULL) == FC_STATUS_OK);
    CHECK(fabs(p[2] - 8.0 / 81.0) < 1e-15);

    CHECK(fc_kernel_from_json("{\"lambda\":0.5,\"alpha\":{\"2\":1},\"x\":1}", &kernel) == FC_STATUS_INVALID_ARGUMENT);

    fc_simulator_free(sim);
    fc_kernel_free(kernel);
    printf("ok\n");
    return 0;
}
