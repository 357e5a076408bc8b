#pragma once

#include <memory>
#include <string>

#include "fluidmc/agent.hpp"
#include "fluidmc/fluid.hpp"
#include "fluidmc/model.hpp"

namespace testutil {

inline std::string source_path(const std::string& rel) { return std::string(FLUIDMC_SOURCE_DIR) + "/" + rel; }

inline const fluidmc::PopulationModel& client_model() {
  static const fluidmc::PopulationModel m = fluidmc::load_model(source_path("models/client_server.pm"));
  return m;
}

inline std::shared_ptr<const fluidmc::FluidTrajectory> client_trajectory(double t_max = 400.0) {
  static std::shared_ptr<const fluidmc::FluidTrajectory> cached;
  if (!cached || cached->t_max() < t_max) {
    const auto& m = client_model();
    cached = std::make_shared<fluidmc::FluidTrajectory>(
        fluidmc::integrate_fluid(fluidmc::build_drift(m), m.init, t_max));
  }
  return cached;
}

inline std::shared_ptr<const fluidmc::AgentGenerator> client_generator(double t_max = 400.0) {
  const auto& m = client_model();
  return std::make_shared<fluidmc::AgentGenerator>(m, client_trajectory(t_max),
                                                   fluidmc::tracked_states(m, *m.state_index("C_rq")));
}

}  // namespace testutil
