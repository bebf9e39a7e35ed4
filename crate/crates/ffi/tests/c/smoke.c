#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "filelife.h"

#define CHECK(cond)                                                    \
  do {                                                                 \
    if (!(cond)) {                                                     \
      const char *msg = fl_last_error_message();                       \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond,   \
              msg ? msg : "no message");                               \
      return 1;                                                        \
    }                                                                  \
  } while (0)

int main(void) {
  FlParams *params = NULL;
  CHECK(fl_params_new(1.0, 4.0, 1.0, 2, &params) == FL_STATUS_OK);

  FlReport *approx = NULL;
  CHECK(fl_approx(params, &approx) == FL_STATUS_OK);
  CHECK(fabs(fl_report_mean(approx) - 1.4542109027782) < 1e-9);

  FlReport *qbd = NULL;
  size_t level = 0;
  CHECK(fl_qbd(params, 1e-8, &qbd) == FL_STATUS_OK);
  CHECK(fl_report_truncation_level(qbd, &level) == FL_STATUS_OK && level > 2);
  CHECK(fl_report_mean(qbd) > fl_report_mean(approx));

  size_t n = 0;
  CHECK(fl_stationary(1.0, 4.0, 1e-12, NULL, 0, &n) == FL_STATUS_BUFFER_TOO_SMALL);
  double *theta = malloc(n * sizeof *theta);
  CHECK(fl_stationary(1.0, 4.0, 1e-12, theta, n, &n) == FL_STATUS_OK);
  CHECK(fabs(theta[0] - exp(-4.0)) < 1e-15);
  free(theta);

  FlParams *bad = NULL;
  CHECK(fl_params_new(0.0, 4.0, 1.0, 2, &bad) == FL_STATUS_INVALID_ARGUMENT);
  CHECK(bad == NULL && fl_last_error_message() != NULL);

  fl_report_free(qbd);
  fl_report_free(approx);
  fl_params_free(params);
  printf("ok %s\n", fl_version());
  return 0;
}
