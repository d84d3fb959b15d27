#include <math.h>
#include <stdio.h>
#include <string.h>
#include "lorentzkit.h"

#define CHECK(c)                                            \
    do {                                                    \
        if (!(c)) {                                         \
            fprintf(stderr, "failed: %s (line %d)\n", #c, __LINE__); \
            return 1;                                       \
        }                                                   \
    } while (0)

int main(void) {
    LkMetric *kerr = NULL;
    CHECK(lk_metric_kerr(1.0, 0.5, LK_CHART_BOYER_LINDQUIST, &kerr) == LK_OK);
    size_t dim = 0;
    CHECK(lk_metric_dim(kerr, &dim) == LK_OK && dim == 4);

    double x[4] = {0.0, 3.0, 1.2, 0.4};
    double ric = -1.0, riem = -1.0;
    CHECK(lk_ricci_residual(kerr, x, 4, &ric, &riem) == LK_OK);
    CHECK(riem > 1e-3 && ric <= 1e-9 * riem);

    char hash[65];
    CHECK(lk_metric_hash(kerr, hash, sizeof hash) == LK_OK && strlen(hash) == 64);
    CHECK(lk_metric_hash(kerr, hash, 10) == LK_BUFFER_TOO_SMALL);

    double inside[4] = {0.0, 1.5, 1.2, 0.4};
    double g[16];
    CHECK(lk_metric_components(kerr, inside, 4, g) == LK_DOMAIN);
    char msg[256];
    CHECK(lk_last_error(msg, sizeof msg) == LK_OK && strlen(msg) > 0);
    lk_metric_free(kerr);

    LkMetric *bad = NULL;
    CHECK(lk_metric_kerr(1.0, 2.0, LK_CHART_INGOING, &bad) == LK_INVALID_ARGUMENT && bad == NULL);

    LkReport *rep = NULL;
    CHECK(lk_run("command = \"verify\"\nsuite = \"ernst\"\nsamples = 20\n", &rep) == LK_OK);
    int32_t passed = 0;
    CHECK(lk_report_passed(rep, &passed) == LK_OK && passed == 1);
    CHECK(strstr(lk_report_json(rep), "\"schema_version\": \"1\"") != NULL);
    lk_report_free(rep);

    puts("ok");
    return 0;
}
