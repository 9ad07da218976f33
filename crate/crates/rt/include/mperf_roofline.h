#ifndef MPERF_ROOFLINE_H
#define MPERF_ROOFLINE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct mperf_loop_info {
    uint32_t line;
    const char *filename; /* not necessarily NUL terminated */
    size_t filename_len;
    const char *func_name;
    size_t func_name_len;
} mperf_loop_info;

typedef struct mperf_loop_handle mperf_loop_handle;

mperf_loop_handle *mperf_roofline_internal_notify_loop_begin(mperf_loop_info info);
bool mperf_roofline_internal_is_instrumented_profiling(void);
void mperf_roofline_internal_add_counts(mperf_loop_handle *handle, uint64_t load_bytes, uint64_t store_bytes,
                                        uint64_t int_ops, uint64_t fp_ops);
void mperf_roofline_internal_notify_loop_end(mperf_loop_handle *handle);
void mperf_roofline_internal_finalize_report(void);

#ifdef __cplusplus
}
#endif

#endif
