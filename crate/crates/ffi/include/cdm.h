#ifndef CDM_H
#define CDM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. Zero is success.
typedef enum CdmStatus {
  CDM_STATUS_OK = 0,
  CDM_STATUS_NULL_POINTER = 1,
  CDM_STATUS_INVALID_ARGUMENT = 2,
  CDM_STATUS_NOT_FOUND = 3,
  CDM_STATUS_IO = 4,
  CDM_STATUS_PARSE = 5,
  CDM_STATUS_VALIDATION = 6,
  CDM_STATUS_NUMERIC = 7,
  CDM_STATUS_CHECKPOINT = 8,
  CDM_STATUS_PANIC = 9,
} CdmStatus;

// Entity kind for identifiability runs.
typedef enum CdmMode {
  CDM_MODE_LEARNER = 0,
  CDM_MODE_QUESTION = 1,
} CdmMode;

// Opaque dataset handle.
typedef struct CdmDataset CdmDataset;

// Opaque model handle: a model plus the response vectors it diagnoses from.
typedef struct CdmModel CdmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *cdm_last_error(void);

// Library version as a static NUL-terminated string.
const char *cdm_version(void);

// Loads a response-log CSV and a Q-matrix CSV. `q_base` is the external
// id of the first Q-matrix row.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be writable.
enum CdmStatus cdm_dataset_load(const char *logs_path,
                                const char *q_path,
                                int64_t q_base,
                                struct CdmDataset **out_dataset);

// Builds a dataset from dense ids. `q_matrix` is `n_questions x
// n_concepts`, row-major, entries 0 or 1; `scores` are 0 or 1.
//
// # Safety
// Each array must hold the stated number of elements.
enum CdmStatus cdm_dataset_from_arrays(size_t n_learners,
                                       size_t n_questions,
                                       size_t n_concepts,
                                       const uint32_t *learners,
                                       const uint32_t *questions,
                                       const uint8_t *scores,
                                       size_t n_logs,
                                       const uint8_t *q_matrix,
                                       struct CdmDataset **out_dataset);

// Seeded synthetic dataset shaped like Math1 with `learners` learners.
//
// # Safety
// `out_dataset` must be writable.
enum CdmStatus cdm_dataset_synthetic(size_t learners,
                                     uint64_t seed,
                                     struct CdmDataset **out_dataset);

// Writes learner, question, concept and log counts. Any output may be null.
//
// # Safety
// `dataset` must come from this library; non-null outputs must be writable.
enum CdmStatus cdm_dataset_shape(const struct CdmDataset *dataset,
                                 size_t *n_learners,
                                 size_t *n_questions,
                                 size_t *n_concepts,
                                 size_t *n_logs);

// Releases a dataset. Null is ignored.
//
// # Safety
// `dataset` must come from this library and not be used afterwards.
void cdm_dataset_free(struct CdmDataset *dataset);

// Splits the dataset with `seed` and trains `model_kind` (`idcdm`,
// `ncdm`, `irt`, ...) on the fit part. `config` is null or `key = value`
// lines as accepted by the CLI's config file.
//
// # Safety
// Pointers must be valid; `config` may be null.
enum CdmStatus cdm_model_train(const struct CdmDataset *dataset,
                               const char *model_kind,
                               uint64_t seed,
                               const char *config,
                               struct CdmModel **out_model);

// Loads a checkpoint and attaches it to `dataset`, whose logs form the
// response vectors used for diagnosis.
//
// # Safety
// Pointers must be valid.
enum CdmStatus cdm_model_load(const char *path,
                              const struct CdmDataset *dataset,
                              struct CdmModel **out_model);

// Writes the model to a checkpoint file.
//
// # Safety
// Pointers must be valid.
enum CdmStatus cdm_model_save(const struct CdmModel *model, const char *path);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void cdm_model_free(struct CdmModel *model);

// Copies the model kind name, NUL-terminated, into `buf`. Returns
// `InvalidArgument` when `len` is too small.
//
// # Safety
// `buf` must hold `len` bytes.
enum CdmStatus cdm_model_kind(const struct CdmModel *model, char *buf, size_t len);

// Probability of a correct response for each (learner, question) pair.
//
// # Safety
// Arrays must hold `n` elements.
enum CdmStatus cdm_model_predict(const struct CdmModel *model,
                                 const uint32_t *learners,
                                 const uint32_t *questions,
                                 size_t n,
                                 double *out_probs);

// Shapes of the learner-trait and question-parameter matrices. Any
// output may be null.
//
// # Safety
// `model` must be valid; non-null outputs must be writable.
enum CdmStatus cdm_model_diagnosis_shape(const struct CdmModel *model,
                                         size_t *learner_rows,
                                         size_t *learner_cols,
                                         size_t *question_rows,
                                         size_t *question_cols);

// Writes learner traits (row-major) into `out_traits`, which must hold
// exactly rows x cols values as reported by `cdm_model_diagnosis_shape`.
//
// # Safety
// `out_traits` must hold `len` values.
enum CdmStatus cdm_model_learner_traits(const struct CdmModel *model,
                                        double *out_traits,
                                        size_t len);

// Writes question parameters (row-major) into `out_params`.
//
// # Safety
// `out_params` must hold `len` values.
enum CdmStatus cdm_model_question_params(const struct CdmModel *model,
                                         double *out_params,
                                         size_t len);

// Mean degree of consistency of the model's learner traits on all logs
// of `dataset`.
//
// # Safety
// Pointers must be valid.
enum CdmStatus cdm_model_doc(const struct CdmModel *model,
                             const struct CdmDataset *dataset,
                             double *out_doc);

// Rate of explainability overfitting from a training and a test DOC.
//
// # Safety
// `out_reo` must be writable.
enum CdmStatus cdm_reo(double doc_train, double doc_test, double *out_reo);

// Duplicates every learner or question of `dataset`, trains `model_kind`
// with `seed`, and writes the identifiability score.
//
// # Safety
// Pointers must be valid; `config` may be null.
enum CdmStatus cdm_ids(const struct CdmDataset *dataset,
                       const char *model_kind,
                       enum CdmMode mode,
                       uint64_t seed,
                       const char *config,
                       double *out_ids);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDM_H */
