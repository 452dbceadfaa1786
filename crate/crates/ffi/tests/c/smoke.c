#include <stdio.h>
#include <string.h>
#include "orbidual.h"

#define CHECK(x) do { if ((x) != ORB_STATUS_OK) { char m[256]; orb_last_error(m, sizeof m, NULL); fprintf(stderr, "%s: %s\n", #x, m); return 1; } } while (0)

int main(void) {
    OrbDouble *d = NULL;
    CHECK(orb_double_lu_weinstein(&d));
    double alpha[3] = {0.7, 0.0, 0.0};
    int holds = 0;
    double res = 1.0;
    CHECK(orb_double_alpha_condition(d, alpha, 3, &holds, &res));
    orb_double_free(d);
    if (!holds) return 2;

    double beta[3] = {0.8, 0.1, 0.1};
    OrbTrajectory *t = NULL;
    CHECK(orb_rigid_body_flow(1.0, 2.0, 3.0, beta, 0.1, 1e-3, &t));
    size_t len = 0, dim = 0;
    CHECK(orb_trajectory_shape(t, &len, &dim));
    orb_trajectory_free(t);
    if (len < 2 || dim != 3) return 3;

    if (orb_double_abelian(0, &d) != ORB_STATUS_INVALID_ARGUMENT) return 4;
    printf("ok %s\n", orb_version());
    return 0;
}
