#ifndef PRISM_H
#define PRISM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PrismStatus {
  PRISM_STATUS_OK = 0,
  PRISM_STATUS_NULL_POINTER = 1,
  PRISM_STATUS_INVALID_ARGUMENT = 2,
  PRISM_STATUS_PARSE = 3,
  PRISM_STATUS_RUNTIME = 4,
  PRISM_STATUS_PANIC = 5,
} PrismStatus;

// Parsed potential game with exact rational payoffs.
typedef struct PrismGame PrismGame;

// Simulated pipeline configuration.
typedef struct PrismSimulation PrismSimulation;

typedef struct PrismChannelAnalysis {
  double entropy_q;
  double mutual_information;
  double posterior_correct;
  double posterior_incorrect;
  double conditional_entropy;
  double bayes_error;
} PrismChannelAnalysis;

typedef struct PrismSimulationResult {
  uint64_t trials;
  uint64_t correct;
  uint64_t covered;
  double mean_quality;
  double ci_low;
  double ci_high;
  double coverage;
  double mean_tokens;
  // True when every correct output came from a covered task.
  bool identity_holds;
} PrismSimulationResult;

// Last error message on this thread, or NULL when none was recorded.
const char *prism_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *prism_version(void);

// Probability that at least one of `k` independent agents succeeds.
//
// # Safety
// `out` must be valid for writes.
enum PrismStatus prism_iid_coverage(double p, uint32_t k, double *out);

// Coverage times selection floor; `tightened` adds the synthesis factor.
//
// # Safety
// `out` must be valid for writes.
enum PrismStatus prism_performance_bound(double p,
                                         uint32_t k,
                                         double reviewer_error,
                                         uint32_t synth_iters,
                                         bool tightened,
                                         double *out);

// Majority-vote accuracy of `k` (odd) independent voters.
//
// # Safety
// `out` must be valid for writes.
enum PrismStatus prism_vote_accuracy(double p, uint32_t k, double *out);

// Information carried by a binary verification signal.
//
// # Safety
// `out` must be valid for writes.
enum PrismStatus prism_channel_analysis(double prior_p,
                                        double fp_rate,
                                        double fn_rate,
                                        struct PrismChannelAnalysis *out);

// Parses a game in the text format (`k <n> lambda <x>` then one
// `player strategy quality score` line per strategy).
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be valid for writes.
enum PrismStatus prism_game_parse(const char *text, struct PrismGame **out);

// # Safety
// `game` must come from [`prism_game_parse`]; `out` must be valid for writes.
enum PrismStatus prism_game_player_count(const struct PrismGame *game, size_t *out);

// Checks the exact potential identity on every unilateral deviation, up to
// `cap` deviations.
//
// # Safety
// `game` must come from [`prism_game_parse`]; the out-pointers must be
// valid for writes.
enum PrismStatus prism_game_verify(const struct PrismGame *game,
                                   uint64_t cap,
                                   bool *out_passed,
                                   uint64_t *out_checked);

// Round-robin best-response dynamics from `initial`; the terminal profile
// is written to `out_terminal`. Both arrays hold one strategy per player.
//
// # Safety
// `game` must come from [`prism_game_parse`]; `initial` must be readable and
// `out_terminal` writable for `len` elements.
enum PrismStatus prism_game_best_response(const struct PrismGame *game,
                                          const size_t *initial,
                                          size_t *out_terminal,
                                          size_t len);

// # Safety
// `game` must come from [`prism_game_parse`] and not be used afterwards.
// NULL is accepted.
void prism_game_free(struct PrismGame *game);

// Simulated pipeline with `k` exchangeable proposers of success rate `p`
// and pairwise correlation `rho`, `r` reviewers per candidate with error
// `reviewer_error`, and `s` synthesis iterations.
//
// # Safety
// `out` must be valid for writes.
enum PrismStatus prism_simulation_new(uint32_t k,
                                      uint32_t r,
                                      uint32_t s,
                                      double p,
                                      double reviewer_error,
                                      double rho,
                                      uint64_t seed,
                                      struct PrismSimulation **out);

// Runs `trials` simulated tasks. Results depend only on the seed and the
// configuration.
//
// # Safety
// `sim` must come from [`prism_simulation_new`]; `out` must be valid for writes.
enum PrismStatus prism_simulation_run(const struct PrismSimulation *sim,
                                      uint64_t trials,
                                      struct PrismSimulationResult *out);

// # Safety
// `sim` must come from [`prism_simulation_new`] and not be used afterwards.
// NULL is accepted.
void prism_simulation_free(struct PrismSimulation *sim);

#endif  /* PRISM_H */
