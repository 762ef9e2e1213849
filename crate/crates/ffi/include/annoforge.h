#ifndef ANNOFORGE_H
#define ANNOFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum AfStatus {
  AF_STATUS_OK = 0,
  AF_STATUS_NULL_POINTER = 1,
  AF_STATUS_INVALID_UTF8 = 2,
  // Input text failed to parse or validate.
  AF_STATUS_FORMAT = 3,
  // An edit's preconditions do not hold; the document is unchanged.
  AF_STATUS_PRECONDITION = 4,
  // A metric is undefined for the input.
  AF_STATUS_METRICS = 5,
  AF_STATUS_PANIC = 6,
} AfStatus;

// A mention graph with colored groups.
typedef struct AfClusterGraph AfClusterGraph;

// A constituency tree under construction.
typedef struct AfTreeDoc AfTreeDoc;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy of the last error message raised on this thread, or null. Free it
// with `af_string_free`.
char *af_last_error_message(void);

// # Safety
// `s` must be null or a string returned by this library, freed once.
void af_string_free(char *s);

// Flat forest over the whitespace-separated tokens of `sentence`.
//
// # Safety
// `sentence` must be a valid C string and `out` writable.
enum AfStatus af_tree_new(const char *sentence, struct AfTreeDoc **out);

// Parses bracket notation such as `(My dog) likes`.
//
// # Safety
// `text` must be a valid C string and `out` writable.
enum AfStatus af_tree_parse(const char *text, struct AfTreeDoc **out);

// Groups contiguous siblings under a new node whose id is written to
// `new_id`.
//
// # Safety
// `doc` must be a live handle, `children` must point at `len` ids, and
// `new_id` must be writable.
enum AfStatus af_tree_group(struct AfTreeDoc *doc,
                            const uint32_t *children,
                            size_t len,
                            uint32_t *new_id);

// # Safety
// `doc` must be a live handle.
enum AfStatus af_tree_delete(struct AfTreeDoc *doc, uint32_t id);

// # Safety
// `doc` must be a live handle.
enum AfStatus af_tree_toggle_fold(struct AfTreeDoc *doc, uint32_t id);

// Writes the bracketed form to `out`; free it with `af_string_free`.
//
// # Safety
// `doc` must be a live handle and `out` writable.
enum AfStatus af_tree_serialize(const struct AfTreeDoc *doc, char **out);

// # Safety
// `doc` must be null or a handle from this library, freed once.
void af_tree_free(struct AfTreeDoc *doc);

// # Safety
// `json` must be a valid C string and `out` writable.
enum AfStatus af_clusters_from_json(const char *json, struct AfClusterGraph **out);

// Links `dragged` to `target`, merging their groups.
//
// # Safety
// `graph` must be a live handle.
enum AfStatus af_clusters_add_link(struct AfClusterGraph *graph, uint32_t dragged, uint32_t target);

// # Safety
// `graph` must be a live handle.
enum AfStatus af_clusters_remove_link(struct AfClusterGraph *graph, uint32_t a, uint32_t b);

// Writes the cluster document as JSON to `out`; free it with
// `af_string_free`.
//
// # Safety
// `graph` must be a live handle and `out` writable.
enum AfStatus af_clusters_to_json(const struct AfClusterGraph *graph, char **out);

// # Safety
// `graph` must be null or a handle from this library, freed once.
void af_clusters_free(struct AfClusterGraph *graph);

// Purity of a system cluster document against a gold cluster document or
// `{"labels": {...}}` map.
//
// # Safety
// Both strings must be valid C strings and `out` writable.
enum AfStatus af_purity_json(const char *system, const char *gold, double *out);

// Rand index, same inputs as `af_purity_json`.
//
// # Safety
// Both strings must be valid C strings and `out` writable.
enum AfStatus af_rand_index_json(const char *system, const char *gold, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANNOFORGE_H */
