#pragma once

// JSON checkpoints. Vectors are arrays, matrices are arrays of rows.

#include <Eigen/Dense>

#include "json.hpp"

#include "hexpert/density.hpp"
#include "hexpert/meta.hpp"
#include "hexpert/net.hpp"
#include "hexpert/normal_wishart.hpp"
#include "hexpert/oracle.hpp"
#include "hexpert/rl.hpp"
#include "hexpert/supervised.hpp"

namespace hexpert {

using Json = nlohmann::json;

Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);
Json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const Json& j);

Activation activation_from_string(const std::string& s);
Head head_from_string(const std::string& s);

Json to_json(const NetD& net);
NetD net_from_json(const Json& j);

Json to_json(const NormalWishartD& nw);
NormalWishartD normal_wishart_from_json(const Json& j);

Json to_json(const ResourceParams& rp);
ResourceParams resource_params_from_json(const Json& j);

Json to_json(const oracle::TabularProblem& prob);
oracle::TabularProblem tabular_problem_from_json(const Json& j);
Json to_json(const oracle::HierSolution& sol);
oracle::HierSolution hier_solution_from_json(const Json& j);

// Write-only bank checkpoints (parameters and priors, no optimizer state).
Json to_json(const supervised::ExpertBank& bank);
Json to_json(const density::DensityBank& bank);
Json to_json(const rl::RLBank& bank);
Json to_json(const meta::MetaBank& bank);

}  // namespace hexpert
