#include <math.h>
#include <stdio.h>

#include "embstab.h"

int main(void) {
    double z[] = {1, 0, 0, 1, 1, 1, -1, 2};
    double z2[] = {0, 1, -1, 0, -1, 1, -2, -1};
    EmbstabEmbedding *a = NULL, *b = NULL;
    if (embstab_embedding_new(4, 2, z, &a) != EMBSTAB_STATUS_OK) return 1;
    if (embstab_embedding_new(4, 2, z2, &b) != EMBSTAB_STATUS_OK) return 1;

    double v = 0;
    if (embstab_repsim("aligned_cos", a, b, 2, &v) != EMBSTAB_STATUS_OK || fabs(v - 1.0) > 1e-9) return 2;

    double p[] = {1, 0};
    double q[] = {0, 1};
    EmbstabOutput *o = NULL, *o2 = NULL;
    embstab_output_new(1, 2, p, &o);
    embstab_output_new(1, 2, q, &o2);
    if (embstab_funcsim("jsd", o, o2, NULL, 0, &v) != EMBSTAB_STATUS_OK || fabs(v - log(2.0)) > 1e-9) return 3;

    size_t labels[] = {0};
    EmbstabStatus st = embstab_funcsim("norm_disagreement", o, o, labels, 1, &v);
    if (st != EMBSTAB_STATUS_NUMERIC_ERROR) return 4;
    printf("%s\n", embstab_last_error());

    embstab_output_free(o);
    embstab_output_free(o2);
    embstab_embedding_free(a);
    embstab_embedding_free(b);
    printf("ok %s\n", embstab_version());
    return 0;
}
