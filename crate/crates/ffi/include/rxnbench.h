#ifndef RXNBENCH_H
#define RXNBENCH_H

#include <stdbool.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum RxnStatus {
  RXN_STATUS_OK = 0,
  RXN_STATUS_NULL_ARGUMENT = 1,
  RXN_STATUS_INVALID_UTF8 = 2,
  RXN_STATUS_PARSE_ERROR = 3,
  RXN_STATUS_INVALID_ARGUMENT = 4,
  RXN_STATUS_IO_ERROR = 5,
  RXN_STATUS_PANIC = 6,
} RxnStatus;

/* Parsed reaction. */
typedef struct RxnReaction RxnReaction;

/* Equivalence rule set. */
typedef struct RxnEquivRules RxnEquivRules;

/* Completion rule library. */
typedef struct RxnCompletionRules RxnCompletionRules;

/* Library version, static storage. */
const char *rxn_version(void);

/* Message of the last failed call on this thread, or NULL. Valid until the
 * next call on the same thread. */
const char *rxn_last_error_message(void);

/* Releases a string returned by this library. NULL is ignored. */
void rxn_string_free(char *s);

RxnStatus rxn_reaction_parse(const char *text, RxnReaction **out);

void rxn_reaction_free(RxnReaction *r);

/* Canonical text with molecules sorted within each side. */
RxnStatus rxn_reaction_canonical(const RxnReaction *r, char **out);

RxnStatus rxn_reaction_is_balanced(const RxnReaction *r, bool *out);

/* Element delta (reactants minus products) in signature form. */
RxnStatus rxn_reaction_delta(const RxnReaction *r, char **out);

RxnStatus rxn_reaction_missing_carbons(const RxnReaction *r, uint64_t *out);

/* Bundled equivalence rules. Never NULL. */
RxnEquivRules *rxn_equiv_rules_default(void);

RxnStatus rxn_equiv_rules_load(const char *path, RxnEquivRules **out);

void rxn_equiv_rules_free(RxnEquivRules *rules);

RxnStatus rxn_exact_match(const RxnReaction *pred, const RxnReaction *target, bool *out);

RxnStatus rxn_equivalence_match(const RxnReaction *pred,
                                const RxnReaction *target,
                                const RxnEquivRules *rules,
                                bool *out);

/* Bundled completion rules. Never NULL. */
RxnCompletionRules *rxn_completion_rules_default(void);

RxnStatus rxn_completion_rules_load(const char *path, RxnCompletionRules **out);

void rxn_completion_rules_free(RxnCompletionRules *rules);

/* Rule-based completion. out_completed receives a new reaction handle, also
 * when unsolved. out_confidence and out_solved may be NULL. */
RxnStatus rxn_complete_by_rules(const RxnReaction *r,
                                const RxnCompletionRules *rules,
                                uint32_t max_applications,
                                RxnReaction **out_completed,
                                double *out_confidence,
                                bool *out_solved);

#ifdef __cplusplus
}
#endif

#endif
