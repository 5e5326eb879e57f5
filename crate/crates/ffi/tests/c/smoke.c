#include <math.h>
#include <stdio.h>
#include "cournot.h"

int main(void) {
    CournotGame *g = NULL;
    if (cournot_scenario_game("G1", &g) != COURNOT_STATUS_OK) {
        fprintf(stderr, "%s\n", cournot_last_error());
        return 1;
    }
    double x[3];
    if (cournot_solve_nash(g, 1e-12, x, 3) != COURNOT_STATUS_OK) return 2;
    for (int i = 0; i < 3; i++)
        if (fabs(x[i] - 0.25) > 1e-9) return 3;
    CournotGame *bad = NULL;
    double price[2] = {1.0, 1.0};
    double c1[2] = {0.0, 0.0};
    if (cournot_game_new(price, 2, c1, NULL, 2, &bad) != COURNOT_STATUS_INVALID_GAME) return 4;
    if (cournot_last_error() == NULL) return 5;
    cournot_game_free(g);
    printf("%.6f %.6f %.6f\n", x[0], x[1], x[2]);
    return 0;
}
