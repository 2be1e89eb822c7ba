#ifndef FSKAN_C_H
#define FSKAN_C_H

/* C interface to the FS-KAN library. All functions return a status code;
 * details of the last failure are available via fskan_last_error(). Strings
 * returned through char** out-parameters are heap-allocated and must be
 * released with fskan_string_free(). */

#ifdef __cplusplus
extern "C" {
#endif

typedef enum fskan_status {
    FSKAN_OK = 0,
    FSKAN_ERR_USAGE = 1,      /* malformed arguments */
    FSKAN_ERR_VALIDATION = 2, /* bad shapes, specs, files */
    FSKAN_ERR_NUMERIC = 3     /* a numeric verification failed */
} fskan_status;

typedef struct fskan_group fskan_group;

const char* fskan_version(void);

/* Thread-local message describing the most recent failure. */
const char* fskan_last_error(void);

void fskan_string_free(char* s);

/* Group text form: S(n), C(n), triv(n), prod(A,B), gen(n; (0 1 2)(3 4), ...). */
fskan_status fskan_group_parse(const char* text, fskan_group** out);
void fskan_group_free(fskan_group* g);
int fskan_group_degree(const fskan_group* g);

/* Orbit counts, representatives and (optionally) the full table as JSON. */
fskan_status fskan_orbits_json(const fskan_group* g, int k_out, int k_in, int include_table,
                               char** json_out);

/* Stabilizer-orbit count |[n] / Stab_G(q)|. Returns negative on error. */
int fskan_stabilizer_orbit_count(const fskan_group* g, int q);

/* config_json: {"task","n","T","count_train","count_val","count_test",
 *               "noise_sigma","formula_id","box_lo","box_hi","seed","out_dir"}.
 * Writes <task>_train/val/test.jsonl and reports the paths. */
fskan_status fskan_gen_data(const char* config_json, char** report_json);

/* Runs one training experiment (see the documented config schema); writes
 * model.json and metrics.jsonl into output_dir. */
fskan_status fskan_train(const char* config_json, char** report_json);

/* Accuracy (classification) or RMSE (regression) of a model on a dataset. */
fskan_status fskan_eval(const char* model_path, const char* data_path, char** metrics_json);

/* direction: "mlp2kan" or "kan2mlp". eps bounds the sampled sup error for
 * kan2mlp. domain_lo/hi give the per-channel input interval. */
fskan_status fskan_convert(const char* model_path, const char* direction, double eps,
                           double domain_lo, double domain_hi, const char* out_model_path,
                           char** report_json);

/* One CSV of (x,value) samples per shared univariate function. */
fskan_status fskan_export_splines(const char* model_path, const char* out_dir, int num_samples,
                                  double lo, double hi, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* FSKAN_C_H */
