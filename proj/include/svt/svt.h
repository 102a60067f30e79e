#ifndef SVT_H
#define SVT_H

/* C interface to the sparse-voxel reconstruction engine. All entry points
 * return a status code; svt_last_error() describes the most recent failure
 * on the calling thread. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum svt_status {
    SVT_OK = 0,
    SVT_ERR_INVALID = 1,    /* bad arguments or configuration */
    SVT_ERR_IO = 2,         /* file missing, unreadable, or malformed */
    SVT_ERR_STRUCTURAL = 3, /* violated data contract */
    SVT_ERR_RESOURCE = 4,   /* a resource cap was exceeded */
    SVT_ERR_DEGENERATE = 5, /* a pyramid level emptied out */
    SVT_ERR_FAILED = 6,     /* command ran and reported failure */
    SVT_ERR_INTERNAL = 7
} svt_status;

/* Message for the last error on this thread; empty string if none. */
const char* svt_last_error(void);

typedef struct svt_options {
    const char* scene;      /* scene directory */
    const char* config;     /* optional key=value config file */
    const char* checkpoint; /* parameter file to load (reconstruct) or write (train) */
    const char* out;        /* output directory */
    const char* precision;  /* "f32" or "f64"; NULL = f64 */
    uint64_t seed;
    int deterministic;
    int steps;              /* <0: take from config */
    /* bench */
    int dims;
    double occupancy;
    int window;
    int trials;
} svt_options;

/* Fills an options struct with defaults; call before setting fields. */
void svt_options_init(svt_options* opts);

svt_status svt_gen_scene(const svt_options* opts);
svt_status svt_reconstruct(const svt_options* opts);
svt_status svt_train_tiny(const svt_options* opts);
svt_status svt_verify(const svt_options* opts);
svt_status svt_bench(const svt_options* opts);

/* ---- opaque handles ---- */

typedef struct svt_tsdf svt_tsdf;
typedef struct svt_mesh svt_mesh;

/* Ground-truth TSDF of a stored scene. */
svt_status svt_tsdf_load_scene(const char* scene_dir, svt_tsdf** out);
void svt_tsdf_dims(const svt_tsdf* tsdf, int* x, int* y, int* z);
void svt_tsdf_free(svt_tsdf* tsdf);

svt_status svt_marching_cubes(const svt_tsdf* tsdf, double iso, svt_mesh** out);
svt_status svt_mesh_load_ply(const char* path, svt_mesh** out);
svt_status svt_mesh_save_ply(const svt_mesh* mesh, const char* path);
size_t svt_mesh_vertex_count(const svt_mesh* mesh);
size_t svt_mesh_triangle_count(const svt_mesh* mesh);
void svt_mesh_free(svt_mesh* mesh);

#ifdef __cplusplus
}
#endif

#endif /* SVT_H */
