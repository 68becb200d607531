#ifndef COLLABDISTILL_H
#define COLLABDISTILL_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define CD_API __attribute__((visibility("default")))
#else
#define CD_API
#endif

typedef enum cd_status {
  CD_OK = 0,
  CD_ERR_ARGUMENT = 1,
  CD_ERR_DEGENERATE = 2,
  CD_ERR_SPEC = 3,
  CD_ERR_CONFIG = 4,
  CD_ERR_PRECONDITION = 5,
  CD_ERR_INFEASIBLE = 6,
  CD_ERR_DATA = 7,
  CD_ERR_DIVERGENCE = 8,
  CD_ERR_INTERNAL = 9
} cd_status;

/* Message of the last failed call on this thread; empty after success. */
CD_API const char* cd_last_error(void);
CD_API const char* cd_status_name(cd_status status);
/* Process exit code for a status: 0, 2 (config/usage), 3 (data), 4 (divergence), 70 (internal). */
CD_API int cd_exit_code(cd_status status);
CD_API const char* cd_version(void);

/* Strings returned by the library are released with cd_string_free. */
CD_API void cd_string_free(char* s);

/* Architecture descriptions. */
typedef struct cd_arch cd_arch;

CD_API cd_status cd_arch_preset(const char* name, cd_arch** out);
CD_API cd_status cd_arch_from_json(const char* json, cd_arch** out);
CD_API cd_status cd_arch_to_json(const cd_arch* arch, char** out);
CD_API void cd_arch_free(cd_arch* arch);
CD_API cd_status cd_arch_params(const cd_arch* arch, int include_decoder, int64_t* out);
CD_API cd_status cd_arch_flops(const cd_arch* arch, int height, int width, int include_decoder, int64_t* out);
CD_API cd_status cd_arch_peak_memory(const cd_arch* arch, int height, int width, int bytes_per_scalar, int64_t* out);
CD_API cd_status cd_arch_probe_max_resolution(const cd_arch* arch, int64_t budget_bytes, int bytes_per_scalar,
                                              int* out);

/* RGB images, planar channel-major doubles in [0, 1]. */
typedef struct cd_image cd_image;

CD_API cd_status cd_image_load(const char* path, cd_image** out);
CD_API cd_status cd_image_create(int height, int width, const double* planar, cd_image** out);
CD_API cd_status cd_image_save(const cd_image* image, const char* path);
CD_API cd_status cd_image_size(const cd_image* image, int* height, int* width);
CD_API const double* cd_image_data(const cd_image* image);
CD_API void cd_image_free(cd_image* image);

/* Trained encoder/decoder pairs loaded from checkpoint directories. */
typedef struct cd_bundle cd_bundle;

CD_API cd_status cd_bundle_load(const char* const* checkpoint_dirs, size_t count, int use_student, cd_bundle** out);
CD_API void cd_bundle_free(cd_bundle* bundle);
CD_API cd_status cd_stylize_wct(const cd_bundle* bundle, const cd_image* content, const cd_image* style, double alpha,
                                cd_image** out);
CD_API cd_status cd_stylize_adain(const cd_bundle* bundle, const cd_image* content, const cd_image* style,
                                  double alpha, cd_image** out);
CD_API cd_status cd_reconstruct(const cd_bundle* bundle, const cd_image* content, cd_image** out);

/* Commands: "train-decoder", "distill", "stylize", "gatys", "eval", "bench", "cross-pair". */
typedef struct cd_run_options {
  const char* config_json; /* NULL means an empty config */
  const char* base_dir;    /* relative config paths resolve here; NULL = current directory */
  const char* out_dir;     /* overrides the config's "out" when non-NULL */
  uint64_t seed;
  int has_seed; /* seed overrides the config's "seed" when non-zero */
  int deterministic;
} cd_run_options;

/* Runs a command; on success *report_json (may be NULL) receives the report. */
CD_API cd_status cd_run_command(const char* command, const cd_run_options* options, char** report_json);

#ifdef __cplusplus
}
#endif

#endif
