#include <math.h>
#include <stdio.h>
#include <string.h>

#include "pulsesort.h"

#define CHECK(cond)                                                    \
    do {                                                               \
        if (!(cond)) {                                                 \
            fprintf(stderr, "line %d: %s (%s)\n", __LINE__, #cond,     \
                    ps_last_error());                                  \
            return 1;                                                  \
        }                                                              \
    } while (0)

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: smoke <scratch.csv>\n");
        return 2;
    }
    double y = 0.0;
    CHECK(ps_f_periodic(0.25, PS_PERIODIC_FN_LINEAR_PERIODIC, &y) == PS_STATUS_OK);
    CHECK(fabs(y + 0.5) < 1e-12);

    size_t d = 0;
    CHECK(ps_d_low(100.0, 8, 2, 10, &d) == PS_STATUS_OK);
    CHECK(d == 4);

    PsEmbedConfig *cfg = NULL;
    CHECK(ps_embed_config_uniform(8, 2, 10, PS_PERIODIC_FN_LINEAR_PERIODIC, &cfg) == PS_STATUS_OK);
    size_t dim = ps_embed_config_token_dim(cfg);
    CHECK(dim == 8);
    double row[PS_N_VARS] = {2.5, 123.0, 7.75, 0.0, 999.0};
    double token[PS_N_VARS * 8];
    CHECK(ps_encode(cfg, row, 1, token, PS_N_VARS * dim) == PS_STATUS_OK);
    double back[PS_N_VARS];
    CHECK(ps_decode(cfg, token, PS_N_VARS * dim, back) == PS_STATUS_OK);
    for (int i = 0; i < PS_N_VARS; i++) {
        CHECK(fabs(back[i] - row[i]) < 1e-6);
    }
    CHECK(ps_encode(cfg, row, 1, token, 3) == PS_STATUS_BUFFER_TOO_SMALL);
    CHECK(strlen(ps_last_error()) > 0);
    ps_embed_config_free(cfg);

    PsStream *s = ps_stream_new();
    PsPulse p = {10.0, 9400.0, 1.0, -40.0, 30.0, 1};
    CHECK(ps_stream_push(s, p) == PS_STATUS_OK);
    CHECK(ps_stream_write(s, argv[1]) == PS_STATUS_OK);
    ps_stream_free(s);
    PsStream *r = NULL;
    CHECK(ps_stream_read(argv[1], &r) == PS_STATUS_OK);
    CHECK(ps_stream_len(r) == 1);
    PsPulse q;
    CHECK(ps_stream_get(r, 0, &q) == PS_STATUS_OK);
    CHECK(q.rf == 9400.0 && q.label == 1);
    ps_stream_free(r);

    PsClassifier *clf = NULL;
    CHECK(ps_classifier_load("/nonexistent/checkpoint.wvck", &clf) == PS_STATUS_MISSING);
    CHECK(clf == NULL);
    printf("ok %s\n", ps_version());
    return 0;
}
