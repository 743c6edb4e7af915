/*
 * glitchsim C API: clock-glitch fault-injection simulation on a small
 * RV32IC-subset pipeline model.
 *
 * All functions returning gs_status use 0 for success. On failure, when
 * `err` is non-NULL it receives a malloc'd message the caller frees with
 * gs_string_free. Output strings follow the same ownership rule. Handles
 * are opaque and freed with their matching gs_*_free function.
 */
#ifndef GLITCHSIM_H
#define GLITCHSIM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
    GS_OK = 0,
    GS_ERR_RUNTIME = 1, /* I/O failures, internal errors */
    GS_ERR_INVALID = 2  /* bad arguments, bad config, parse errors */
} gs_status;

typedef struct gs_image gs_image;
typedef struct gs_profile gs_profile;
typedef struct gs_run gs_run;

const char* gs_version(void);
void gs_string_free(char* s);

/* ---- programs ------------------------------------------------------- */

/* Assemble mini-assembler source text into a program image. */
gs_status gs_assemble(const char* source, gs_image** out, char** err);

/* Flat little-endian binary plus a "symbol 0xADDR" sidecar. sym_path may be
 * NULL on load when no symbols are needed. */
gs_status gs_image_save(const gs_image* img, const char* bin_path, const char* sym_path,
                        char** err);
gs_status gs_image_load(const char* bin_path, const char* sym_path, gs_image** out, char** err);
void gs_image_free(gs_image* img);

/* Locate instructions by mnemonic (comma separated, case-insensitive).
 * Returns a JSON array of {"mnemonic","pc","text"} in ascending pc order. */
gs_status gs_find_targets(const gs_image* img, const char* mnemonics_csv, char** json_out,
                          char** err);

/* ---- timing profiles ------------------------------------------------ */

gs_status gs_profile_load(const char* path, gs_profile** out, char** err);
void gs_profile_free(gs_profile* p);
/* Content hash of the profile text; owned by the handle. */
const char* gs_profile_hash(const gs_profile* p);

/* ---- simulation ------------------------------------------------------ */

/* Run the pipeline model. run_json options (all optional):
 *   entry_pc        integer, default 0
 *   max_cycles      integer, default 100000
 *   policy          "zero" | "stale" | "seeded_random", default "zero"
 *   seed            integer, default 1
 *   trace           bool: capture the per-cycle text trace
 *   illegal_handler integer pc: redirect target for the illegal path
 *   glitch          {offset_ns, width_ns, target_pc, stage, occurrence}
 * With a glitch, `profile` must be non-NULL; the fault-free golden run is
 * executed alongside and the outcome classified. `occurrence` counts
 * architectural executions of the target pc. */
gs_status gs_run_create(const gs_image* img, const gs_profile* profile, const char* run_json,
                 gs_run** out, char** err);
void gs_run_free(gs_run* r);

/* Combined report: halt reason, counters, registers, and for glitched runs
 * the glitch spec, latch events digest and classified outcome. */
gs_status gs_run_report(const gs_run* r, char** json_out, char** err);
/* Per-cycle trace text (empty unless the run asked for "trace": true). */
gs_status gs_run_trace_text(const gs_run* r, char** text_out, char** err);

/* ---- campaigns ------------------------------------------------------- */

/* Execute a sweep described by a JSON config:
 *   workload         path to a .s source or flat .bin image (required)
 *   syms             sidecar path for .bin workloads
 *   entry_pc         integer, default 0
 *   profile          path to the timing profile (required)
 *   grid             "default" or {offsets_ns, widths_ns, stages, targets};
 *                    targets entries are {mnemonic, pc?, occurrence?} and
 *                    default to the first occurrence found in the image
 *   policy, seed, watchdog_cycles, parallelism
 * Writes records.jsonl, rat.csv and summary.json under out_dir; returns the
 * summary. With resume != 0, completed records in records.jsonl are kept. */
gs_status gs_sweep(const char* config_json, const char* out_dir, int resume,
                   char** summary_json, char** err);

/* Rebuild the risk table from an existing records file. Returns the CSV and
 * a ranked JSON summary. */
gs_status gs_rat_from_records(const char* records_path, char** csv_out, char** summary_json,
                              char** err);

/* ---- root cause ------------------------------------------------------ */

/* Re-simulate with snapshots and render the causal chain.
 * glitch_json: {offset_ns, width_ns, target_pc, stage, occurrence, policy,
 * seed, entry_pc, watchdog_cycles}. as_json selects the JSON rendering. */
gs_status gs_trace_root_cause(const gs_image* img, const gs_profile* profile,
                              const char* glitch_json, int as_json, char** report, char** err);

#ifdef __cplusplus
}
#endif

#endif /* GLITCHSIM_H */
