#ifndef REDUCTION_MACHINE_H
#define REDUCTION_MACHINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RmRunStatus {
  RM_RUN_STATUS_HALTED = 0,
  RM_RUN_STATUS_TIMEOUT = 1,
} RmRunStatus;

/**
 * Result of every fallible call.
 */
typedef enum RmStatus {
  RM_STATUS_OK = 0,
  RM_STATUS_NULL_POINTER = 1,
  RM_STATUS_INVALID_ARGUMENT = 2,
  RM_STATUS_ASSEMBLY_ERROR = 3,
  RM_STATUS_CONFIG_ERROR = 4,
  RM_STATUS_MACHINE_FAULT = 5,
  /**
   * The register differs between branches of the coarse model.
   */
  RM_STATUS_INDEFINITE = 6,
  RM_STATUS_PANIC = 7,
} RmStatus;

/**
 * A memory image.
 */
typedef struct RmImage RmImage;

/**
 * A machine and its random source.
 */
typedef struct RmMachine RmMachine;

/**
 * Pointer kinematics of one pin.
 */
typedef struct RmKinematics {
  double a_c;
  double tau_d;
  double lambda;
  /**
   * Meaningful only when `can_fire` is true.
   */
  uint64_t latency_cycles;
  bool can_fire;
} RmKinematics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *rm_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rm_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void rm_string_free(char *s);

/**
 * Assembles NUL-terminated source text.
 *
 * # Safety
 * `source` must be a valid C string and `image` a valid pointer.
 */
enum RmStatus rm_assemble(const char *source, struct RmImage **image);

/**
 * Wraps `len` words as an image.
 *
 * # Safety
 * `words` must point to `len` readable words (or be null with `len == 0`).
 */
enum RmStatus rm_image_from_words(const uint16_t *words, size_t len, struct RmImage **image);

/**
 * Number of words in the image, or 0 for null.
 *
 * # Safety
 * `image` must be null or a live image.
 */
size_t rm_image_len(const struct RmImage *image);

/**
 * Copies up to `capacity` words into `buffer` and stores the total length
 * in `len`. Fails with `InvalidArgument` when the buffer is too small.
 *
 * # Safety
 * `buffer` must have room for `capacity` words.
 */
enum RmStatus rm_image_words(const struct RmImage *image,
                             uint16_t *buffer,
                             size_t capacity,
                             size_t *len);

/**
 * Canonical assembly text for the image; free with `rm_string_free`.
 *
 * # Safety
 * `image` must be a live image and `text_out` a valid pointer.
 */
enum RmStatus rm_disassemble(const struct RmImage *image, char **text_out);

/**
 * # Safety
 * `image` must be null or come from this library, and not be freed twice.
 */
void rm_image_free(struct RmImage *image);

/**
 * Builds a machine from a configuration and an image. `seed` is used
 * as given; the configured seed is ignored.
 *
 * # Safety
 * `config_json` must be null or a C string, `image` a live image.
 */
enum RmStatus rm_machine_new(const char *config_json,
                             const struct RmImage *image,
                             uint64_t seed,
                             struct RmMachine **machine);

/**
 * Executes one instruction and stores its cycle cost in `cost` (may be
 * null).
 *
 * # Safety
 * `machine` must be a live machine.
 */
enum RmStatus rm_machine_step(struct RmMachine *machine, uint64_t *cost);

/**
 * Runs until `HALT` or `max_cycles` (0 means the configured limit).
 *
 * # Safety
 * `machine` must be a live machine, `status` valid or null.
 */
enum RmStatus rm_machine_run(struct RmMachine *machine,
                             uint64_t max_cycles,
                             enum RmRunStatus *status);

/**
 * Value of register `index` when every branch agrees on it; `Indefinite`
 * otherwise.
 *
 * # Safety
 * `machine` must be a live machine and `value` a valid pointer.
 */
enum RmStatus rm_machine_register(const struct RmMachine *machine, uint8_t index, uint8_t *value);

/**
 * # Safety
 * `machine` must be a live machine and `value` a valid pointer.
 */
enum RmStatus rm_machine_memory(const struct RmMachine *machine, uint16_t addr, uint16_t *value);

/**
 * Cycle counter, or 0 for null.
 *
 * # Safety
 * `machine` must be null or a live machine.
 */
uint64_t rm_machine_cycle(const struct RmMachine *machine);

/**
 * # Safety
 * `machine` must be null or a live machine.
 */
bool rm_machine_is_halted(const struct RmMachine *machine);

/**
 * Information acquired so far and the amount expected from the branch
 * weights, in bits. Either output may be null.
 *
 * # Safety
 * `machine` must be a live machine.
 */
enum RmStatus rm_machine_information(const struct RmMachine *machine,
                                     double *acquired_bits,
                                     double *predicted_bits);

/**
 * # Safety
 * `machine` must be null or come from this library, and not be freed twice.
 */
void rm_machine_free(struct RmMachine *machine);

/**
 * Runs `n_members` seeded copies and returns the report as JSON; free it
 * with `rm_string_free`.
 *
 * # Safety
 * `config_json` must be null or a C string, `image` a live image and
 * `report_json` a valid pointer.
 */
enum RmStatus rm_ensemble_json(const char *config_json,
                               const struct RmImage *image,
                               uint64_t n_members,
                               uint64_t seed,
                               char **report_json);

/**
 * Pointer kinematics for a configuration.
 *
 * # Safety
 * `config_json` must be null or a C string and `kinematics` valid.
 */
enum RmStatus rm_physics_kinematics(const char *config_json, struct RmKinematics *kinematics);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REDUCTION_MACHINE_H */
