/*
 * Minimal C client: generate a corpus, train, evaluate, and query the
 * memory bank through the exported surface.
 *
 * From the workspace root:
 *   cargo build -p bimind-ffi
 *   cc crates/bimind-ffi/examples/client.c -lm \
 *      -Icrates/bimind-ffi/include -Ltarget/debug -lbimind_ffi \
 *      -Wl,-rpath,"$PWD/target/debug" -o /tmp/bimind-client
 *   /tmp/bimind-client /tmp/bimind-demo
 */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "bimind.h"

static char scratch[512];

static void die(const char *step) {
    bimind_last_error(scratch, sizeof scratch);
    fprintf(stderr, "%s failed: %s\n", step, scratch);
    exit(1);
}

static void write_file(const char *path, const char *body) {
    FILE *f = fopen(path, "w");
    if (!f || fputs(body, f) == EOF || fclose(f) == EOF) {
        fprintf(stderr, "cannot write %s\n", path);
        exit(1);
    }
}

int main(int argc, char **argv) {
    const char *dir = argc > 1 ? argv[1] : "/tmp/bimind-demo";
    char spec[256], corpus[256], config[256], ckpt[256], bank[256], reports[256], cmd[300];
    snprintf(cmd, sizeof cmd, "mkdir -p %s", dir);
    if (system(cmd) != 0) return 1;
    snprintf(spec, sizeof spec, "%s/spec.conf", dir);
    snprintf(corpus, sizeof corpus, "%s/corpus.jsonl", dir);
    snprintf(config, sizeof config, "%s/run.conf", dir);
    snprintf(ckpt, sizeof ckpt, "%s/model.ckpt", dir);
    snprintf(bank, sizeof bank, "%s/model.ckpt.bank", dir);
    snprintf(reports, sizeof reports, "%s/reports", dir);

    printf("library version %s\n", bimind_version());

    write_file(spec, "kind = content\nn = 32\nseed = 9\nwindow = 24\n");
    write_file(config,
               "d = 12\nheads = 2\nlayers = 1\nd_s = 24\nk_neighbors = 3\n"
               "dropout = 0.1\nl_max = 24\nlearning_rate = 0.005\nbatch_size = 8\n"
               "max_epochs = 2\npatience = 2\nfusion_mode = entropy_gate\n"
               "lambda_agree = 0.1\nseed = 91\n");

    if (bimind_synth_gen(spec, corpus) != BIMIND_STATUS_OK) die("synth_gen");
    if (bimind_train(config, corpus, ckpt) != BIMIND_STATUS_OK) die("train");
    if (bimind_eval(ckpt, corpus, reports, NULL) != BIMIND_STATUS_OK) die("eval");
    printf("reports under %s\n", reports);

    BimindBank *handle = bimind_bank_open(bank);
    if (!handle) die("bank_open");
    size_t n = bimind_bank_len(handle);
    size_t dim = bimind_bank_dim(handle);
    printf("bank: %zu rows, dim %zu, seed %llu\n", n, dim,
           (unsigned long long)bimind_bank_seed(handle));

    double *query = calloc(dim, sizeof *query);
    size_t indices[3];
    double sims[3];
    size_t written = 0;
    bool clamped = false;
    double norm = 0.0;
    for (size_t i = 0; i < dim; i++) {
        query[i] = (double)(i % 5) - 2.0;
        norm += query[i] * query[i];
    }
    for (size_t i = 0; i < dim; i++) query[i] /= sqrt(norm);
    if (bimind_bank_topk(handle, query, dim, 3, NULL, indices, sims, &written,
                         &clamped) != BIMIND_STATUS_OK)
        die("topk");
    for (size_t r = 0; r < written; r++) {
        bimind_bank_id(handle, indices[r], scratch, sizeof scratch);
        printf("  #%zu %s (label %d) cosine %.4f\n", r + 1, scratch,
               bimind_bank_label(handle, indices[r]), sims[r]);
    }

    double z0[2] = {0.4, -0.1}, ze[2] = {1.1, -0.3}, gain = 0.0;
    if (bimind_vox(z0, ze, 2, 0, &gain) != BIMIND_STATUS_OK) die("vox");
    printf("knowledge gain of the sample pair: %+.2f\n", gain);

    free(query);
    bimind_bank_free(handle);
    return 0;
}
