#include <stdio.h>
#include <stdlib.h>

#include "cxmap.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    fseek(f, 0, SEEK_SET);
    char *buf = malloc((size_t)n + 1);
    if (fread(buf, 1, (size_t)n, f) != (size_t)n) {
        fclose(f);
        free(buf);
        return NULL;
    }
    buf[n] = '\0';
    fclose(f);
    return buf;
}

int main(int argc, char **argv) {
    if (argc < 2) return 64;
    char *json = slurp(argv[1]);
    if (!json) return 65;

    CxmDecomposition *h = NULL;
    CxmStatus st = cxm_decompose(json, &h);
    free(json);
    if (st != CXM_STATUS_OK) {
        fprintf(stderr, "decompose: %d %s\n", st, cxm_last_error());
        return 1;
    }

    size_t nodes = 0;
    cxm_decomposition_nodes(h, &nodes);
    printf("version %s\nnodes %zu\n", cxm_version(), nodes);

    double worst = 0.0;
    for (size_t t = 0; t < nodes; t++) {
        double total, plus, minus;
        if (cxm_decomposition_norms(h, t, &total, &plus, &minus) != CXM_STATUS_OK) return 2;
        double gap = total - plus - minus;
        if (gap < 0) gap = -gap;
        if (gap > worst) worst = gap;
    }
    double rec, add, eig;
    cxm_decomposition_residuals(h, &rec, &add, &eig);
    printf("additivity gap %.3e reconstruction %.3e\n", worst, rec);
    if (worst > 1e-10 || rec > 1e-10) return 3;

    char *plus_json = NULL;
    if (cxm_decomposition_part_json(h, CXM_PART_PLUS, &plus_json) != CXM_STATUS_OK || !plus_json) return 4;
    cxm_string_free(plus_json);
    cxm_decomposition_free(h);

    CxmDecomposition *bad = NULL;
    st = cxm_decompose("not json", &bad);
    printf("bad input status %d: %s\n", st, cxm_last_error() ? "message" : "none");
    return bad == NULL && st == CXM_STATUS_INVALID_INPUT ? 0 : 5;
}
