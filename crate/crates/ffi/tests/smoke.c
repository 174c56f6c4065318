#include <stdio.h>

#include "rxnbench.h"

#define CHECK(call)                                                   \
  do {                                                                \
    RxnStatus s_ = (call);                                            \
    if (s_ != RXN_STATUS_OK) {                                        \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,               \
              rxn_last_error_message());                              \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  RxnReaction *ester = NULL;
  CHECK(rxn_reaction_parse("OCC.CC(O)=O>>CCOC(C)=O", &ester));

  char *text = NULL;
  CHECK(rxn_reaction_canonical(ester, &text));
  printf("%s\n", text);
  rxn_string_free(text);

  CHECK(rxn_reaction_delta(ester, &text));
  printf("%s\n", text);
  rxn_string_free(text);

  bool balanced = true;
  CHECK(rxn_reaction_is_balanced(ester, &balanced));
  printf("balanced=%d\n", balanced);

  RxnCompletionRules *rules = rxn_completion_rules_default();
  RxnReaction *done = NULL;
  bool solved = false;
  CHECK(rxn_complete_by_rules(ester, rules, 5, &done, NULL, &solved));
  printf("solved=%d\n", solved);

  RxnReaction *ionic = NULL;
  CHECK(rxn_reaction_parse("CC(=O)Cl.CN>>CC(=O)NC.[H+].[Cl-]", &ionic));
  RxnReaction *amide = NULL;
  CHECK(rxn_reaction_parse("CC(=O)Cl.CN>>CC(=O)NC.Cl", &amide));
  RxnEquivRules *eq = rxn_equiv_rules_default();
  bool equiv = false;
  CHECK(rxn_equivalence_match(ionic, amide, eq, &equiv));
  printf("equiv=%d\n", equiv);

  RxnReaction *bad = NULL;
  printf("parse=%d\n", (int)rxn_reaction_parse("C((", &bad));

  rxn_reaction_free(ester);
  rxn_reaction_free(done);
  rxn_reaction_free(ionic);
  rxn_reaction_free(amide);
  rxn_equiv_rules_free(eq);
  rxn_completion_rules_free(rules);
  return bad == NULL ? 0 : 1;
}
