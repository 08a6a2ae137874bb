#pragma once

// Oracle values stored in tests/fixtures/oracles.txt. Shared by the
// regenerator and the drift test so both compute exactly the same thing.

#include <map>
#include <string>

#include "dvga/flows.hpp"
#include "dvga/params.hpp"
#include "dvga/tensor.hpp"

namespace oracle {

using FixtureValues = std::map<std::string, dvga::Matrix>;

/// Inputs the fixtures are computed from.
dvga::FlowConfig fixture_flow_config();
dvga::ParamStore fixture_flow_params();
dvga::Matrix fixture_flow_inputs();
/// Unit-norm channel embeddings for the toy graph (K = 2, width 3).
dvga::Matrix fixture_projection();
inline constexpr double kFixtureAlpha = 0.4;
inline constexpr double kFixtureBeta = 0.7;
inline constexpr int kFixtureIterations = 2;

/// Every oracle value, computed with the brute-force references.
FixtureValues compute_fixture_values();

void write_fixture_values(const std::string& path, const FixtureValues& values);
FixtureValues read_fixture_values(const std::string& path);

/// Writes edges.txt, features.txt and labels.txt of the toy graph.
void write_toy_graph(const std::string& dir);

}  // namespace oracle
