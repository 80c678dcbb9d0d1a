#include <stdio.h>
#include "abr.h"

#define CHECK(call)                                                   \
    do {                                                              \
        AbrStatus s_ = (call);                                        \
        if (s_ != ABR_STATUS_OK) {                                    \
            const char *m_ = abr_last_error();                        \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, m_ ? m_ : ""); \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    const double times[] = {0.0, 10.0};
    const double bw[] = {2.0, 0.5};
    const uint32_t ladder[ABR_N_LEVELS] = {300, 750, 1200, 1850, 2850, 4300};
    AbrTrace *trace = NULL;
    AbrVideo *video = NULL;
    AbrSimulator *sim = NULL;
    AbrController *bb = NULL;
    CHECK(abr_trace_from_arrays(times, bw, 2, &trace));
    CHECK(abr_video_synth(ladder, ABR_N_LEVELS, 49, 0.0, 1, &video));
    CHECK(abr_sim_new(trace, video, true, 42, &sim));
    CHECK(abr_controller_new("bb", 4.3, &bb));

    size_t levels[49];
    double rebuf[49];
    double obs[ABR_OBS_DIM];
    bool done = false;
    size_t n = 0;
    while (!done) {
        AbrStepOutcome out;
        CHECK(abr_controller_select(bb, sim, &levels[n]));
        CHECK(abr_sim_step(sim, levels[n], &out));
        CHECK(abr_sim_observe(sim, obs));
        rebuf[n++] = out.rebuffer_s;
        done = out.done;
    }
    if (abr_sim_step(sim, 0, NULL) != ABR_STATUS_EPISODE_FINISHED) return 2;

    AbrQoe q;
    CHECK(abr_episode_qoe(levels, rebuf, n, ladder, ABR_N_LEVELS, 4.3, &q));
    printf("chunks=%zu qoe=%.6f\n", n, q.total);

    abr_controller_free(bb);
    abr_sim_free(sim);
    abr_video_free(video);
    abr_trace_free(trace);
    return n == 49 ? 0 : 3;
}
