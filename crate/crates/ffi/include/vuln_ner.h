#ifndef VULN_NER_H
#define VULN_NER_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VnerStatus {
  VNER_STATUS_OK = 0,
  VNER_STATUS_NULL_POINTER = 1,
  VNER_STATUS_INVALID_UTF8 = 2,
  VNER_STATUS_PARSE = 3,
  VNER_STATUS_DOMAIN = 4,
  VNER_STATUS_IO = 5,
  VNER_STATUS_CONFIG = 6,
  VNER_STATUS_TRAINING = 7,
  VNER_STATUS_MODEL = 8,
  VNER_STATUS_OUT_OF_RANGE = 9,
  VNER_STATUS_INTERNAL = 10,
} VnerStatus;

// Parsed sentences.
typedef struct VnerSentences VnerSentences;

// A trained tagger loaded from a model directory.
typedef struct VnerTagger VnerTagger;

typedef struct VnerStats {
  size_t n_sentences;
  double sentence_entity_prop;
  double token_prop_sn;
  double token_prop_sv;
  double nononly_prop;
} VnerStats;

typedef struct VnerTagMetrics {
  double precision;
  double recall;
  double f1;
  size_t support;
  size_t tp;
  size_t fp;
  size_t fn_;
  bool precision_undefined;
} VnerTagMetrics;

typedef struct VnerReport {
  struct VnerTagMetrics sn;
  struct VnerTagMetrics sv;
  size_t n_tokens;
} VnerReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *vner_last_error(void);

// Library version as a static NUL-terminated string.
const char *vner_version(void);

// Parses CoNLL text (`token<TAB>tag`, blank line between sentences).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum VnerStatus vner_sentences_parse(const char *text, struct VnerSentences **out);

// # Safety
// `s` must come from this library and not be used afterwards.
void vner_sentences_free(struct VnerSentences *s);

// # Safety
// `s` must be a live handle.
size_t vner_sentences_count(const struct VnerSentences *s);

// Token count of sentence `index`.
//
// # Safety
// `s` must be a live handle; `out` writable.
enum VnerStatus vner_sentence_len(const struct VnerSentences *s, size_t index, size_t *out);

// Copies the tag codes of sentence `index` into `tags` (capacity `cap`).
//
// # Safety
// `tags` must have room for `cap` bytes.
enum VnerStatus vner_sentence_tags(const struct VnerSentences *s,
                                   size_t index,
                                   uint8_t *tags,
                                   size_t cap);

// Renders the sentences back to CoNLL. Free the result with
// [`vner_string_free`].
//
// # Safety
// `s` must be a live handle; `out` writable.
enum VnerStatus vner_sentences_to_conll(const struct VnerSentences *s, char **out);

// # Safety
// `p` must come from this library.
void vner_string_free(char *p);

// # Safety
// `s` must be a live handle; `out` writable.
enum VnerStatus vner_stats(const struct VnerSentences *s, struct VnerStats *out);

// Token-level per-tag precision, recall and F1 of `pred` against `gold`.
//
// # Safety
// Both handles live; `out` writable.
enum VnerStatus vner_token_prf(const struct VnerSentences *gold,
                               const struct VnerSentences *pred,
                               struct VnerReport *out);

// Support-weighted mean of the SN and SV F1 scores.
//
// # Safety
// `report` readable; `out` writable.
enum VnerStatus vner_weighted_f1(const struct VnerReport *report, double *out);

// Most probable tag sequence. `emissions` holds `len` rows of 3
// probabilities (SN, SV, O); `transition` is row-major 3x3 (from, to).
// `start`, `end` and each transition row must be strictly positive distributions.
//
// # Safety
// Arrays must have the stated lengths; `out_tags` room for `len` bytes.
enum VnerStatus vner_viterbi(const double *emissions,
                             size_t len,
                             const double *start,
                             const double *transition,
                             const double *end,
                             uint8_t *out_tags);

// Nearest support entry of `query`. `support` holds `n` row-major vectors
// of `dim` floats with tag codes in `support_tags`. Vectors are L2
// normalised before comparison; `out_distance` is the squared distance.
//
// # Safety
// Arrays must have the stated lengths; outputs writable.
enum VnerStatus vner_nn_tag(const float *query,
                            size_t dim,
                            const float *support,
                            const uint8_t *support_tags,
                            size_t n,
                            uint8_t *out_tag,
                            double *out_distance);

// Loads a model directory written by the `train` command.
//
// # Safety
// `dir` NUL-terminated; `out` writable.
enum VnerStatus vner_tagger_load(const char *dir, struct VnerTagger **out);

// # Safety
// `t` must come from this library and not be used afterwards.
void vner_tagger_free(struct VnerTagger *t);

// Tags `input`; the result is a new sentence handle with predicted tags.
//
// # Safety
// Handles live; `out` writable.
enum VnerStatus vner_tagger_predict(const struct VnerTagger *tagger,
                                    const struct VnerSentences *input,
                                    struct VnerSentences **out);

// Final-layer vector of every token of sentence `index`, row-major into
// `out` (capacity `cap` floats). `out_dim` receives the dimension.
//
// # Safety
// Handles live; `out` has room for `cap` floats; `out_dim` writable.
enum VnerStatus vner_tagger_embed(const struct VnerTagger *tagger,
                                  const struct VnerSentences *input,
                                  size_t index,
                                  float *out,
                                  size_t cap,
                                  size_t *out_dim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VULN_NER_H */
