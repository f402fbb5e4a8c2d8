/* C interface to the zerolog detector.
 *
 * A detector handle owns a trained checkpoint (checkpoint.bin) and the
 * event-embedding table (embeddings.tsv) produced by a training run. Handles
 * are immutable after open: one handle may be shared across threads for
 * scoring. Every function is panic-safe and reports failures through status
 * codes; zl_last_error() returns the message of the most recent failure on
 * the calling thread.
 *
 * This header is maintained by hand and checked against the exported symbols
 * by the crate's test suite.
 */

#ifndef ZEROLOG_H
#define ZEROLOG_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ZlStatus {
    ZL_OK = 0,
    /* Unreadable or malformed files, mismatched dimensions, empty sessions.
     * Matches the CLI exit code for input failures. */
    ZL_INPUT = 2,
    /* Non-finite numbers where finite ones are required. Matches the CLI
     * exit code for numeric failures. */
    ZL_NUMERIC = 3,
    /* A required pointer argument was null. */
    ZL_NULL_ARGUMENT = 4,
    /* A string argument was not valid UTF-8. */
    ZL_INVALID_UTF8 = 5,
    /* A panic was caught at the FFI boundary. */
    ZL_INTERNAL = 6,
} ZlStatus;

/* Opaque. Create with zl_detector_open, release with zl_detector_free. */
typedef struct ZlDetector ZlDetector;

/* Library version, static NUL-terminated string. Never null. */
const char *zl_version(void);

/* Message from the most recent failing call on this thread. Never null,
 * empty until something fails. Valid until the next failing call on the
 * same thread. */
const char *zl_last_error(void);

/* Opens a detector from a checkpoint file and an embedding table file.
 * On ZL_OK writes a new handle to `out`; the caller owns it. The embedding
 * width must match the network input dimension recorded in the checkpoint. */
ZlStatus zl_detector_open(const char *checkpoint_path,
                          const char *embeddings_path,
                          ZlDetector **out);

/* Input dimension the detector expects (the embedding width). */
ZlStatus zl_detector_dimension(const ZlDetector *detector, size_t *out);

/* Scores one session. `event_ids` holds the session's template ids in order
 * (n_events of them, at least one); `system` names the side they were parsed
 * under, matching the `<system>:<template_id>` embedding keys. Ids missing
 * from the table resolve through the deterministic hash fallback and never
 * fail. Writes the anomaly probability in [0, 1] to `probability`. */
ZlStatus zl_detector_score(const ZlDetector *detector,
                           const char *system,
                           const uint32_t *event_ids,
                           size_t n_events,
                           double *probability);

/* Releases a handle. Null is a no-op; freeing a handle twice is undefined
 * behavior. */
void zl_detector_free(ZlDetector *detector);

#ifdef __cplusplus
}
#endif

#endif /* ZEROLOG_H */
