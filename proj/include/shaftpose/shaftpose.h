/* shaftpose: synthetic-data instrument shaft detection and pose estimation.
 *
 * C interface. Every function returning sp_status reports failures through the status code;
 * sp_last_error() then describes the most recent failure on the calling thread. Strings
 * returned through char** out-parameters are owned by the caller and must be released with
 * sp_string_free(). */
#ifndef SHAFTPOSE_H
#define SHAFTPOSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(SHAFTPOSE_BUILDING)
#define SP_API __attribute__((visibility("default")))
#else
#define SP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sp_status {
  SP_OK = 0,
  SP_ERR_INVALID_ARGUMENT = 1,
  SP_ERR_IO = 2,
  SP_ERR_SCHEMA = 3,
  SP_ERR_NUMERIC = 4,
  SP_ERR_ARCHITECTURE_MISMATCH = 5,
  SP_ERR_NO_OBJECT = 6,
  SP_ERR_CONFIG = 7,
  SP_ERR_INTERNAL = 99
} sp_status;

typedef struct sp_config sp_config;
typedef struct sp_model sp_model;

/* Called after every training step with the 1-based step index, learning rate and total loss. */
typedef void (*sp_train_callback)(int64_t step, double lr, double total_loss, void* user);

SP_API const char* sp_version(void);
SP_API const char* sp_last_error(void);
SP_API const char* sp_status_name(sp_status status);
SP_API void sp_string_free(char* s);

/* Configuration. `preset` is "repro", "smoke" or NULL (same as "repro"). */
SP_API sp_status sp_config_create(const char* preset, sp_config** out);
SP_API void sp_config_destroy(sp_config* config);
/* Applies a JSON file of flat keys; unknown keys fail with SP_ERR_CONFIG. */
SP_API sp_status sp_config_load_file(sp_config* config, const char* path);
/* `value` is JSON text; bare words are taken as strings. */
SP_API sp_status sp_config_set(sp_config* config, const char* key, const char* value);
SP_API sp_status sp_config_to_json(const sp_config* config, char** json_out);

/* Commands. Output directories are created as needed. */
SP_API sp_status sp_gen_data(const sp_config* config, const char* out_dir, uint64_t start_index);
/* `datasets` holds `num_datasets` dataset roots whose records are concatenated. `resume` may be
 * NULL. `stop_after_step` < 0 trains to the end of the schedule. */
SP_API sp_status sp_train(const sp_config* config, const char* const* datasets, size_t num_datasets,
                          const char* out_dir, const char* resume, int64_t stop_after_step,
                          sp_train_callback callback, void* user);
/* `report_json` may be NULL. */
SP_API sp_status sp_eval(const sp_config* config, const char* checkpoint, const char* dataset, const char* out_dir,
                         char** report_json);
/* `checkpoint` may be NULL when `pose_override_json` is given (object or array of
 * {x, y, z, pitch, yaw}). `detections_json` may be NULL. */
SP_API sp_status sp_infer(const sp_config* config, const char* checkpoint, const char* image, const char* out_dir,
                          const char* pose_override_json, int resize, char** detections_json);
/* Runs the gradient suite. `inject_fault` names an op whose backward is deliberately
 * corrupted (NULL for none). *passed is 1 when every op is within tolerance. */
SP_API sp_status sp_grad_check(uint64_t seed, int trials, const char* inject_fault, int* passed, char** report_text);
/* Newline-separated names of the registered gradient-check ops. */
SP_API sp_status sp_grad_check_ops(char** names);

/* In-process inference on raw RGB pixels (row-major, 3 bytes per pixel). */
SP_API sp_status sp_model_load(const sp_config* config, const char* checkpoint, sp_model** out);
SP_API void sp_model_destroy(sp_model* model);
SP_API sp_status sp_model_detect(sp_model* model, const uint8_t* rgb, int width, int height, char** detections_json);

#ifdef __cplusplus
}
#endif

#endif /* SHAFTPOSE_H */
