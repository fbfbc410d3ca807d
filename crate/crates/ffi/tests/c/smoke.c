#include <stdio.h>
#include <string.h>
#include "cdm.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        CdmStatus s_ = (call);                                             \
        if (s_ != CDM_STATUS_OK) {                                         \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, cdm_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    CdmDataset *ds = NULL;
    CdmModel *model = NULL;
    size_t n = 0, m = 0, k = 0, logs = 0;
    CHECK(cdm_dataset_synthetic(40, 1, &ds));
    CHECK(cdm_dataset_shape(ds, &n, &m, &k, &logs));
    CHECK(cdm_model_train(ds, "irt", 2, "max_epochs = 2", &model));

    uint32_t learners[2] = {0, 1};
    uint32_t questions[2] = {3, 4};
    double probs[2];
    CHECK(cdm_model_predict(model, learners, questions, 2, probs));

    char kind[16];
    CHECK(cdm_model_kind(model, kind, sizeof kind));
    if (strcmp(kind, "irt") != 0 || probs[0] <= 0.0 || probs[0] >= 1.0) return 2;

    if (cdm_model_train(ds, "nope", 0, NULL, &model) != CDM_STATUS_PARSE) return 3;
    if (cdm_last_error() == NULL) return 4;

    printf("%zu %zu %zu %zu %s %.6f\n", n, m, k, logs, kind, probs[1]);
    cdm_model_free(model);
    cdm_dataset_free(ds);
    return 0;
}
