#include <math.h>
#include <stdio.h>
#include <string.h>

#include "momineq.h"

int main(void) {
    double q = 0.0;
    if (mi_chi2_quantile(1, 0.95, &q) != MI_STATUS_OK || fabs(q - 3.841458820694124) > 1e-8) {
        fprintf(stderr, "chi2 quantile: %.12f\n", q);
        return 1;
    }

    double mean[2] = {2.0, -3.5};
    double variance[4] = {1.0, 0.0, 0.0, 1.0};
    double a[4] = {1.0, 0.0, 0.0, 1.0};
    double b[2] = {0.0, 0.0};
    MiFullProblem *problem = NULL;
    if (mi_full_problem_new(mean, variance, 2, 1, a, b, 2, 0.05, &problem) != MI_STATUS_OK) {
        fprintf(stderr, "new: %s\n", mi_last_error_message());
        return 1;
    }
    MiOutcome *outcome = NULL;
    if (mi_full_problem_test(problem, MI_VARIANT_RCC, NULL, &outcome) != MI_STATUS_OK) {
        fprintf(stderr, "test: %s\n", mi_last_error_message());
        return 1;
    }
    MiSummary s;
    mi_outcome_summary(outcome, &s);
    if (fabs(s.statistic - 4.0) > 1e-12 || !s.reject || s.r_hat != 1) {
        fprintf(stderr, "summary: T=%g reject=%d r=%zu\n", s.statistic, s.reject, s.r_hat);
        return 1;
    }
    char *json = NULL;
    mi_outcome_to_json(outcome, &json);
    if (json == NULL || strstr(json, "\"reject\":true") == NULL) {
        return 1;
    }
    mi_string_free(json);
    mi_outcome_free(outcome);
    mi_full_problem_free(problem);

    double singular[4] = {1.0, 1.0, 1.0, 1.0};
    if (mi_full_problem_new(mean, singular, 2, 1, a, b, 2, 0.05, &problem) != MI_STATUS_OK) {
        return 1;
    }
    if (mi_full_problem_test(problem, MI_VARIANT_CC, NULL, &outcome) != MI_STATUS_NOT_POSITIVE_DEFINITE) {
        return 1;
    }
    mi_full_problem_free(problem);
    printf("ok %s\n", mi_version());
    return 0;
}
