#ifndef AGENT_UNLEARN_H
#define AGENT_UNLEARN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define AU_API __attribute__((visibility("default")))
#else
#define AU_API
#endif

/* Status codes. Values 1..12 mirror the library's error codes. */
typedef enum au_status {
  AU_OK = 0,
  AU_ERR_INVALID_ARGUMENT = 1,
  AU_ERR_INVARIANT = 2,
  AU_ERR_CAPACITY = 3,
  AU_ERR_PARSE = 4,
  AU_ERR_CONSISTENCY = 5,
  AU_ERR_NUMERIC = 6,
  AU_ERR_CERTIFICATE = 7,
  AU_ERR_TRANSPORT = 8,
  AU_ERR_ATTACK_SETUP = 9,
  AU_ERR_ESTIMATION = 10,
  AU_ERR_CONFIGURATION = 11,
  AU_ERR_IO = 12,
  AU_ERR_INTERNAL = 99
} au_status;

typedef enum au_mode { AU_MODE_RUN = 0, AU_MODE_CERTIFY = 1, AU_MODE_ATTACK = 2 } au_mode;

typedef enum au_grid_format { AU_GRID_TEXT = 0, AU_GRID_JSON = 1 } au_grid_format;

typedef struct au_experiment au_experiment;
typedef struct au_grid au_grid;
typedef struct au_memory au_memory;

AU_API const char* au_version(void);

/* Message of the last failed call on this thread; "" after a success. */
AU_API const char* au_last_error(void);

/* Strings handed out by the library are released with this. */
AU_API void au_string_free(char* s);

/* --- experiments --------------------------------------------------------- */

AU_API au_status au_experiment_load(const char* config_path, au_experiment** out);
AU_API au_status au_experiment_from_json(const char* config_json, au_experiment** out);
AU_API void au_experiment_free(au_experiment* e);

AU_API au_status au_experiment_set_seed(au_experiment* e, uint64_t seed);
AU_API au_status au_experiment_set_jobs(au_experiment* e, size_t jobs);
AU_API au_status au_experiment_set_allow_network(au_experiment* e, int allow);
AU_API au_status au_experiment_set_output_dir(au_experiment* e, const char* dir);

/* Effective configuration as JSON. */
AU_API au_status au_experiment_config_json(const au_experiment* e, char** out);

/* Runs the pipeline and writes its artifacts. *checks_passed is 1 when
   every configured check held. */
AU_API au_status au_experiment_run(au_experiment* e, au_mode mode, int* checks_passed);

/* Summary of the last run: checks with diagnostics and per-strategy metrics. */
AU_API au_status au_experiment_summary_json(const au_experiment* e, char** out);

/* --- grids ---------------------------------------------------------------- */

AU_API au_status au_grid_generate(uint64_t seed, int width, int height, int obstacles, int treasures,
                                  const char* env_id, au_grid** out);
AU_API au_status au_grid_parse(const char* text, au_grid_format format, const char* env_id,
                               au_grid** out);
AU_API void au_grid_free(au_grid* g);
AU_API au_status au_grid_render(const au_grid* g, au_grid_format format, char** out);
AU_API au_status au_grid_size(const au_grid* g, int* width, int* height);

/* --- agent memory ----------------------------------------------------------- */

AU_API au_status au_memory_load(const char* path, au_memory** out);
AU_API au_status au_memory_save(const au_memory* m, const char* path);
AU_API au_status au_memory_size(const au_memory* m, size_t* entries);
AU_API void au_memory_free(au_memory* m);

#ifdef __cplusplus
}
#endif

#endif
