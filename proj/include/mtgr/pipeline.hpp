#pragma once

// Staging contract for the three-stage training pipeline, modelled as a
// schedule over given stage latencies (no real overlap happens here).
//
//   copy(t)     host->device transfer of batch t; one copy stream, and a
//               single prefetch buffer: it may start once compute(t-1) has
//               started.
//   dispatch(t) embedding exchange for batch t; needs copy(t) done and the
//               backward pass of batch t-1 finished (it reads updated rows).
//   compute(t)  forward/backward of batch t; needs dispatch(t) done.

#include <vector>

namespace mtgr {

struct StageLatency {
  double copy = 0;
  double dispatch = 0;
  double compute = 0;
};

struct StageSpan {
  double start = 0;
  double end = 0;
};

struct BatchSchedule {
  StageSpan copy, dispatch, compute;
};

struct PipelineSchedule {
  std::vector<BatchSchedule> batches;
  double makespan = 0;
  /// Sum of all stage latencies (no overlap).
  double serial_time = 0;
};

PipelineSchedule schedule_pipeline(const std::vector<StageLatency>& latencies);

}  // namespace mtgr
