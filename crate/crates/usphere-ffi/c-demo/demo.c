/* Minimal C consumer: one channel encoded, simulated, decoded and gated.
 *
 * Build from the workspace root (the static library comes from
 * `cargo build -p usphere-ffi`):
 *
 *   cc -Wall -I crates/usphere-ffi/include crates/usphere-ffi/c-demo/demo.c \
 *      target/debug/libusphere_ffi.a -lm -o demo && ./demo
 */
#include <stdio.h>
#include <string.h>
#include "usphere.h"

int main(void) {
    const char *cfg =
        "seed = 5\n"
        "[plan]\n"
        "transmit_rate_hz = 96000\n"
        "[[plan.channels]]\n"
        "carrier_hz = 30000.0\n"
        "[[programs]]\n"
        "fixture = { kind = \"tone\", freq_hz = 1000.0, duration_s = 1.0, peak = 0.5 }\n"
        "[decode]\n"
        "left_channel = 0\n"
        "right_channel = 0\n";
    UsphereRun *run = NULL;
    if (usphere_run_open_str(cfg, &run) != USPHERE_STATUS_OK) {
        fprintf(stderr, "open: %s\n", usphere_last_error());
        return 1;
    }
    if (usphere_run_encode(run) != USPHERE_STATUS_OK ||
        usphere_run_simulate(run) != USPHERE_STATUS_OK ||
        usphere_run_decode(run, -1) != USPHERE_STATUS_OK ||
        usphere_run_analyze(run) != USPHERE_STATUS_OK) {
        fprintf(stderr, "stage: %s\n", usphere_last_error());
        usphere_run_free(run);
        return 1;
    }
    const double *samples = NULL;
    size_t len = 0;
    uint32_t rate = 0;
    if (usphere_run_decoded(run, 0, &samples, &len, &rate) != USPHERE_STATUS_OK) {
        return 1;
    }
    printf("version %s decoded %zu samples at %u Hz\n", usphere_version(), len, rate);
    usphere_run_free(run);
    return len > 0 && rate == 192000 ? 0 : 1;
}
