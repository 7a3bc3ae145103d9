#include <stdio.h>
#include "disclstm.h"

/* Prints the logits of a fixed three-utterance dialogue, one per line. */
int main(void) {
  DisclstmModelConfig cfg = {4, 3, 2, 2, 3};
  DisclstmModel *model = NULL;
  if (disclstm_model_init(&cfg, 7, &model) != DISCLSTM_STATUS_OK) return 10;

  double u[12];
  for (int i = 0; i < 12; i++) u[i] = 0.1 * (double)i - 0.5;
  size_t edges[4] = {0, 1, 1, 2};
  double logits[9];
  if (disclstm_model_forward(model, u, 3, 4, edges, 2, logits) != DISCLSTM_STATUS_OK) return 11;

  size_t bad_edges[2] = {2, 1};
  if (disclstm_model_forward(model, u, 3, 4, bad_edges, 1, logits) != DISCLSTM_STATUS_INVALID_ARGUMENT) return 12;
  if (disclstm_last_error_message() == NULL) return 13;

  if (disclstm_model_forward(model, u, 3, 4, edges, 2, logits) != DISCLSTM_STATUS_OK) return 14;
  for (int i = 0; i < 9; i++) printf("%.17g\n", logits[i]);
  disclstm_model_free(model);
  return 0;
}
