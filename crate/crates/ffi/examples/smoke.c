#include <stdio.h>
#include <string.h>
#include "salvet.h"

int main(void) {
    printf("version %s\n", sv_version());

    const char *spec = "{\"saliencyType\":\"C\",\"saliencyDims\":\"S\",\"backbone\":\"TINY\",\"hiddenSize\":4,\"kernelSize\":3}";
    SvModel *model = NULL;
    if (sv_model_build(spec, 42, &model) != SV_STATUS_OK) {
        fprintf(stderr, "build failed: %s\n", sv_last_error());
        return 1;
    }

    enum { T = 3, H = 16, W = 16 };
    static double frames[T * 3 * H * W];
    for (size_t i = 0; i < sizeof frames / sizeof *frames; i++) frames[i] = (double)(i % 97) / 96.0;
    double rgb[3];
    if (sv_model_predict(model, frames, T, H, W, "seq0", rgb) != SV_STATUS_OK) {
        fprintf(stderr, "predict failed: %s\n", sv_last_error());
        return 1;
    }
    printf("illuminant %.6f %.6f %.6f\n", rgb[0], rgb[1], rgb[2]);

    double a[3] = {1, 0, 0}, b[3] = {1, 1, 0}, deg = 0;
    sv_angular_error(a, b, &deg);
    printf("angle %.4f\n", deg);

    double errs[4] = {2.0, 1.0, 4.0, 3.0};
    SvErrorSummary s;
    sv_error_summary(errs, 4, &s);
    printf("mean %.3f trimean %.3f n %zu\n", s.mean, s.trimean, s.n);

    SvModel *null_model = NULL;
    if (sv_model_build(NULL, 0, &null_model) != SV_STATUS_NULL_POINTER) return 1;
    printf("null error: %s\n", sv_last_error());

    sv_model_free(model);
    return 0;
}
