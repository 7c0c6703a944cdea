#include <math.h>
#include <stdio.h>

#include "impact_kam.h"

int main(void) {
    const double cos_coeffs[1] = {1.0};
    IkForcing *forcing = NULL;
    IkOscillator *osc = NULL;
    IkCurve *curve = NULL;
    IkKamSummary summary;
    IkImpact step;
    char msg[128];

    if (ik_forcing_new(0.0, cos_coeffs, 1, NULL, 0, 0.25, &forcing) != IK_STATUS_OK) return 1;
    if (ik_oscillator_new(forcing, 0.01, &osc) != IK_STATUS_OK) return 2;
    ik_forcing_free(forcing);

    if (ik_impact_map(osc, 0.0, 1e-6, &step) != IK_STATUS_GRAZING) return 3;
    if (ik_last_error_message(msg, sizeof msg) == 0) return 4;

    double omega = 2.0 * M_PI * (0.5 * (sqrt(5.0) - 1.0) + 4.0);
    if (ik_solve_curve(osc, omega, 64, 0.0, &curve, &summary) != IK_STATUS_OK) return 5;
    if (!(summary.final_error < 1e-11) || !summary.quadratic_decay) return 6;

    double t, y, on;
    ik_curve_point(curve, 1.0, &t, &y);
    if (ik_impact_map(osc, t, y, &step) != IK_STATUS_OK) return 7;
    ik_curve_y_at(curve, step.t_bar, &on);
    if (fabs(step.y_bar - on) > 1e-9) return 8;

    printf("impact-kam %s: %zu iterations, error %.2e\n", ik_version(), summary.iterations, summary.final_error);
    ik_curve_free(curve);
    ik_oscillator_free(osc);
    return 0;
}
