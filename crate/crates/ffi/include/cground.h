#ifndef CGROUND_H
#define CGROUND_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CgStatus {
  CG_STATUS_OK = 0,
  CG_STATUS_NULL_POINTER = 1,
  CG_STATUS_INVALID_UTF8 = 2,
  CG_STATUS_ARGUMENT = 3,
  CG_STATUS_IO = 4,
  CG_STATUS_PARSE = 5,
  CG_STATUS_FORMAT = 6,
  CG_STATUS_CONFIG = 7,
  CG_STATUS_BACKEND = 8,
  CG_STATUS_INTEGRITY = 9,
  CG_STATUS_PANIC = 10,
} CgStatus;

// Opaque read-only passage index; may be shared by many sessions.
typedef struct CgIndex CgIndex;

// Opaque conversation with its own common ground.
typedef struct CgSession CgSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread; do not free.
const char *cg_last_error_message(void);

// Library version as a static string; do not free.
const char *cg_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void cg_string_free(char *s);

// SQuAD-style token F1 between a prediction and a gold answer.
//
// # Safety
// `prediction` and `gold` must be nul-terminated strings; `out` must be
// writable.
enum CgStatus cg_token_f1(const char *prediction, const char *gold, double *out);

// Loads a persisted index file.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum CgStatus cg_index_load(const char *path, struct CgIndex **out);

// Builds an index from a passages JSON-lines file with the default
// analyzer.
//
// # Safety
// `path` must be a nul-terminated string; `out` must be writable.
enum CgStatus cg_index_build(const char *path, struct CgIndex **out);

// # Safety
// `index` must come from `cg_index_load`/`cg_index_build` and not have
// been freed. Null is ignored.
void cg_index_free(struct CgIndex *index);

// Ranks passages for `query`. `*out_json` receives a JSON array of
// `{passage_id, rank, s_ret, s_ret_norm}`; `top_n` of 0 uses the default.
//
// # Safety
// `index` must be a live handle, `query` a nul-terminated string and
// `out_json` writable.
enum CgStatus cg_index_search(const struct CgIndex *index,
                              const char *query,
                              uint32_t top_n,
                              char **out_json);

// Starts a conversation over `index`. `config_json` is a configuration
// object (null for defaults: rule generator and selector, lexical reader,
// `cg` setup). The document title and first sentence may be null.
//
// # Safety
// `index` must be a live handle; string arguments must be null or
// nul-terminated; `out` must be writable.
enum CgStatus cg_session_new(const struct CgIndex *index,
                             const char *config_json,
                             const char *doc_title,
                             const char *doc_first_sentence,
                             struct CgSession **out);

// Answers one question. `*out_json` receives
// `{answer, passages, cg: {entries}, mu}`. On failure the session is
// unchanged.
//
// # Safety
// `session` must be a live handle not used concurrently from another
// thread; `question` must be nul-terminated; `out_json` writable.
enum CgStatus cg_session_ask(struct CgSession *session, const char *question, char **out_json);

// Number of turns answered so far, or -1 for a null handle.
//
// # Safety
// `session` must be null or a live handle.
int64_t cg_session_turns(const struct CgSession *session);

// # Safety
// `session` must come from `cg_session_new` and not have been freed. Null
// is ignored.
void cg_session_free(struct CgSession *session);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGROUND_H */
