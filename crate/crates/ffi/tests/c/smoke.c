#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "deltaiss.h"

static char *read_file(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long len = ftell(f);
    fseek(f, 0, SEEK_SET);
    char *buf = malloc((size_t)len + 1);
    size_t got = fread(buf, 1, (size_t)len, f);
    buf[got] = '\0';
    fclose(f);
    return buf;
}

int main(int argc, char **argv) {
    if (argc != 2) return 10;
    char *json = read_file(argv[1]);
    if (!json) return 11;

    DissModel *model = NULL;
    if (diss_model_from_json(json, &model) != DISS_STATUS_OK) return 12;
    free(json);

    DissCertificate *cert = NULL;
    if (diss_certify(model, -1.0, 0, &cert) != DISS_STATUS_OK) {
        fprintf(stderr, "%s\n", diss_last_error());
        return 13;
    }
    size_t n = diss_certificate_dim(cert);
    double *p = malloc(n * n * sizeof(double));
    if (diss_certificate_p(cert, p, n * n) != DISS_STATUS_OK) return 14;

    int32_t passed = 0;
    double gap = 0.0;
    if (diss_validate(model, p, n, &passed, &gap) != DISS_STATUS_OK || !passed) return 15;
    if (fabs(gap - diss_certificate_gap(cert)) > 1e-12) return 16;

    if (diss_model_from_json("{}", &model) != DISS_STATUS_PARSE || model != NULL) return 17;
    if (diss_last_error() == NULL) return 18;

    printf("ok %s n=%zu gap=%.6f\n", diss_version(), n, gap);
    free(p);
    diss_certificate_free(cert);
    return 0;
}
