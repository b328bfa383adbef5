#include <stdio.h>
#include <string.h>
#include "dadp.h"

int main(void) {
    DadpDataset *ds = NULL;
    if (dadp_dataset_generate(1, 3, 2, 24, 7, &ds) != DADP_STATUS_OK) {
        fprintf(stderr, "%s\n", dadp_last_error_message());
        return 1;
    }
    size_t domains = 0, trajectories = 0;
    dadp_dataset_counts(ds, &domains, &trajectories);
    dadp_dataset_free(ds);
    if (domains != 9 || trajectories != 18) return 2;

    DadpDataset *bad = NULL;
    if (dadp_dataset_generate(1, 3, 1, 24, 7, &bad) != DADP_STATUS_INVALID_ARGUMENT) return 3;
    if (strlen(dadp_last_error_message()) == 0) return 4;

    double y[3] = {10.0, 9.0, 7.5}, g = 0.0, v = 0.0;
    if (dadp_balldrop_fit_g(y, 1.0, &g, &v) != DADP_STATUS_OK || g != -0.5) return 5;
    printf("ok %s\n", dadp_version());
    return 0;
}
