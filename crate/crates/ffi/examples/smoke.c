/* Build: cc smoke.c -I../include -L<target>/debug -lgwle_ffi -lm -lpthread -ldl */
#include <stdio.h>
#include "gwle.h"

int main(void) {
    size_t sizes[2] = {6, 6};
    size_t idx[72];
    double x[36], u[72], y[36];
    size_t n = 0;
    for (size_t i = 1; i <= 6; i++) {
        for (size_t j = 1; j <= 6; j++) {
            idx[2 * n] = i;
            idx[2 * n + 1] = j;
            u[2 * n] = i / 6.0;
            u[2 * n + 1] = j / 6.0 + 0.01 * (double)((i * j) % 3);
            x[n] = 1.0;
            y[n] = 2.0 + u[2 * n] - 3.0 * u[2 * n + 1];
            n++;
        }
    }
    GwleDataset *ds = NULL;
    if (gwle_dataset_new(sizes, 2, 1, 2, true, n, idx, x, u, y, &ds) != GWLE_STATUS_OK) {
        fprintf(stderr, "new: %s\n", gwle_last_error_message());
        return 1;
    }
    double u0[2] = {0.5, 0.5}, scales[2] = {1.0, 1.0}, beta[1], grad[2];
    GwleStatus st = gwle_fit_local(ds, u0, 2, GWLE_KERNEL_GAUSSIAN, scales, 0.3, 0.0, beta, grad, NULL, NULL);
    gwle_dataset_free(ds);
    if (st != GWLE_STATUS_OK) {
        fprintf(stderr, "fit: %s\n", gwle_last_error_message());
        return 1;
    }
    printf("gwle %s beta %.12f\n", gwle_version(), beta[0]);
    return (beta[0] > 0.9999999 && beta[0] < 1.0000001) ? 0 : 1;
}
