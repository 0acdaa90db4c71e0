#ifndef SCE_H
#define SCE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of event-type scores written by [`sce_event_model_predict`].
#define SCE_EVENT_TYPE_COUNT 4

// Number of conflict scores written by [`sce_conflict_model_predict`].
#define SCE_TRAINABLE_LABEL_COUNT 16

typedef enum SceStatus {
  SCE_STATUS_OK = 0,
  SCE_STATUS_NULL_POINTER = 1,
  SCE_STATUS_INVALID_UTF8 = 2,
  SCE_STATUS_INVALID_ARGUMENT = 3,
  SCE_STATUS_IO = 4,
  SCE_STATUS_NUMERIC = 5,
  SCE_STATUS_ARTIFACT = 6,
  SCE_STATUS_BACKEND = 7,
  SCE_STATUS_PANIC = 8,
} SceStatus;

typedef enum SceStrategy {
  SCE_STRATEGY_DIRECT = 0,
  SCE_STRATEGY_CHAIN_OF_THOUGHT = 1,
  SCE_STRATEGY_CHAIN_OF_THOUGHT_REPEAT = 2,
} SceStrategy;

// Conflict-type matcher handle with its label embeddings precomputed.
typedef struct SceConflictModel SceConflictModel;

// Event-type classifier handle.
typedef struct SceEventModel SceEventModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string.
const char *sce_version(void);

// Copy the calling thread's last error message into `buf` (truncated,
// always NUL-terminated when `len > 0`). Returns the full message length
// excluding the terminator.
//
// # Safety
// `buf` must be NULL or point to `len` writable bytes.
size_t sce_last_error(char *buf, size_t len);

// Release a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must be NULL or a string returned by this library, not yet freed.
void sce_string_free(char *s);

// Conflict-type label text for `id` in 1..=17, or NULL.
const char *sce_label_text(uint32_t id);

// Event-type display name for `index` in 0..4, or NULL.
const char *sce_event_type_name(uint32_t index);

// Load an event-type checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SceStatus sce_event_model_load(const char *path, struct SceEventModel **out);

// # Safety
// `model` must be NULL or a handle from [`sce_event_model_load`], not yet freed.
void sce_event_model_free(struct SceEventModel *model);

// Score a clip. Writes the four event-type logits (crash, tire strike,
// near-crash, normal driving) to `scores` and the argmax index to `label`.
//
// # Safety
// `model` must be a live handle, `rgb` must hold the whole clip, `scores`
// must have room for 4 values and `label` must be writable.
enum SceStatus sce_event_model_predict(const struct SceEventModel *model,
                                       const uint8_t *rgb,
                                       size_t frames,
                                       size_t height,
                                       size_t width,
                                       double *scores,
                                       uint32_t *label);

// Load a conflict-type checkpoint and encode the label bank.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SceStatus sce_conflict_model_load(const char *path, struct SceConflictModel **out);

// # Safety
// `model` must be NULL or a handle from [`sce_conflict_model_load`], not yet freed.
void sce_conflict_model_free(struct SceConflictModel *model);

// Match a clip against the 16 trainable labels. Writes the cosines in
// label-id order to `scores` and the best label id (1-based) to `label`.
//
// # Safety
// As for [`sce_event_model_predict`], with room for 16 scores.
enum SceStatus sce_conflict_model_predict(const struct SceConflictModel *model,
                                          const uint8_t *rgb,
                                          size_t frames,
                                          size_t height,
                                          size_t width,
                                          double *scores,
                                          uint32_t *label);

// ROUGE-L F1 between two texts.
//
// # Safety
// Both texts must be NUL-terminated; `out` must be writable.
enum SceStatus sce_rouge_l_f1(const char *candidate, const char *reference, double *out);

// METEOR between two texts.
//
// # Safety
// Both texts must be NUL-terminated; `out` must be writable.
enum SceStatus sce_meteor(const char *candidate, const char *reference, double *out);

// Narrate a clip with the deterministic mock backend. `strategy` is an
// [`SceStrategy`] value. `conflict_label` may
// be NULL for normal driving. The final text is returned through `out` and
// must be released with [`sce_string_free`].
//
// # Safety
// `rgb` must hold the whole clip, `conflict_label` must be NULL or
// NUL-terminated, and `out` must be writable.
enum SceStatus sce_narrate_mock(uint64_t seed,
                                uint32_t strategy,
                                const uint8_t *rgb,
                                size_t frames,
                                size_t height,
                                size_t width,
                                uint32_t event_type,
                                const char *conflict_label,
                                char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCE_H */
