#include "mtgr/pipeline.hpp"

#include <algorithm>

#include "mtgr/errors.hpp"

namespace mtgr {

PipelineSchedule schedule_pipeline(const std::vector<StageLatency>& latencies) {
  PipelineSchedule out;
  for (std::size_t t = 0; t < latencies.size(); ++t) {
    const auto& lat = latencies[t];
    if (lat.copy < 0 || lat.dispatch < 0 || lat.compute < 0) throw ContractError("negative stage latency");
    BatchSchedule b;
    const BatchSchedule* prev = t ? &out.batches.back() : nullptr;
    b.copy.start = prev ? std::max(prev->copy.end, prev->compute.start) : 0.0;
    b.copy.end = b.copy.start + lat.copy;
    b.dispatch.start = prev ? std::max({b.copy.end, prev->compute.end, prev->dispatch.end}) : b.copy.end;
    b.dispatch.end = b.dispatch.start + lat.dispatch;
    b.compute.start = prev ? std::max(b.dispatch.end, prev->compute.end) : b.dispatch.end;
    b.compute.end = b.compute.start + lat.compute;
    out.batches.push_back(b);
    out.makespan = b.compute.end;
    out.serial_time += lat.copy + lat.dispatch + lat.compute;
  }
  return out;
}

}  // namespace mtgr
