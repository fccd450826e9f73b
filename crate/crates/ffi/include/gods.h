#ifndef GODS_H
#define GODS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes.
 */
typedef enum GodsStatus {
  GODS_STATUS_OK = 0,
  GODS_STATUS_NULL_POINTER = 1,
  GODS_STATUS_INVALID_ARGUMENT = 2,
  GODS_STATUS_IO = 3,
  GODS_STATUS_SCHEMA = 4,
  GODS_STATUS_NUMERIC = 5,
  GODS_STATUS_PANIC = 6,
} GodsStatus;

typedef enum GodsVariant {
  GODS_VARIANT_BODS = 0,
  GODS_VARIANT_GODS = 1,
  GODS_VARIANT_GODS_N = 2,
  GODS_VARIANT_GODS_O = 3,
  GODS_VARIANT_GODS_E = 4,
} GodsVariant;

typedef enum GodsKernelFamily {
  GODS_KERNEL_FAMILY_LINEAR = 0,
  GODS_KERNEL_FAMILY_RBF = 1,
  GODS_KERNEL_FAMILY_POLYNOMIAL = 2,
  GODS_KERNEL_FAMILY_CHI_SQUARE = 3,
  GODS_KERNEL_FAMILY_HISTOGRAM_INTERSECTION = 4,
} GodsKernelFamily;

/*
 Opaque trained model.
 */
typedef struct GodsModel GodsModel;

/*
 Primal training parameters. `normalize` is 0 or 1.
 */
typedef struct GodsPrimalParams {
  enum GodsVariant variant;
  size_t k;
  double eta;
  double nu;
  double lambda;
  double p_norm;
  int32_t normalize;
  size_t max_iters;
  uint64_t seed;
} GodsPrimalParams;

/*
 Kernel choice. `sigma` is read for RBF, `degree` and `offset` for polynomial.
 */
typedef struct GodsKernel {
  enum GodsKernelFamily family;
  double sigma;
  uint32_t degree;
  double offset;
} GodsKernel;

typedef struct GodsKodsParams {
  struct GodsKernel kernel;
  size_t k;
  double eta;
  double lambda;
  int32_t normalize;
  size_t max_iters;
  uint64_t seed;
} GodsKodsParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Loads a model file into `*out`.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GodsStatus gods_model_load(const char *path, struct GodsModel **out);

/*
 Writes the model to `path`.

 # Safety
 `model` must come from this library and `path` must be NUL-terminated.
 */
enum GodsStatus gods_model_save(const struct GodsModel *model, const char *path);

/*
 Releases a model. Null is ignored.

 # Safety
 `model` must come from this library and not be used afterwards.
 */
void gods_model_free(struct GodsModel *model);

/*
 Trains a primal model on the `n x d` row-major matrix `x`.

 # Safety
 `x` must hold `n * d` doubles and `out` must be valid.
 */
enum GodsStatus gods_train_primal(const double *x,
                                  size_t n,
                                  size_t d,
                                  struct GodsPrimalParams params,
                                  struct GodsModel **out);

/*
 Trains a KODS model on the `n x d` row-major matrix `x`.

 # Safety
 `x` must hold `n * d` doubles and `out` must be valid.
 */
enum GodsStatus gods_train_kods(const double *x,
                                size_t n,
                                size_t d,
                                struct GodsKodsParams params,
                                struct GodsModel **out);

/*
 Fills `s1` and `s2` (each of length `n`) with the scores of the rows of `x`.

 # Safety
 `x` must hold `n * d` doubles; `s1` and `s2` must hold `n` doubles each.
 */
enum GodsStatus gods_model_scores(const struct GodsModel *model,
                                  const double *x,
                                  size_t n,
                                  size_t d,
                                  double *s1,
                                  double *s2);

/*
 Writes 1 (in-class) or -1 (anomaly) per row of `x` into `labels`.

 # Safety
 `x` must hold `n * d` doubles and `labels` must hold `n` ints.
 */
enum GodsStatus gods_model_classify(const struct GodsModel *model,
                                    const double *x,
                                    size_t n,
                                    size_t d,
                                    int32_t *labels);

/*
 Number of features the model expects, or 0 for a null handle.

 # Safety
 `model` must be null or come from this library.
 */
size_t gods_model_feature_dim(const struct GodsModel *model);

/*
 Margin used for classification, or NaN for a null handle.

 # Safety
 `model` must be null or come from this library.
 */
double gods_model_eta(const struct GodsModel *model);

/*
 Copy of the last error message on this thread, or null. Free it with
 [`gods_string_free`].
 */
char *gods_last_error_message(void);

/*
 Releases a string returned by this library.

 # Safety
 `s` must be null or come from [`gods_last_error_message`].
 */
void gods_string_free(char *s);

/*
 Library version as a static NUL-terminated string.
 */
const char *gods_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GODS_H */
