#include "hexpert/serialize.hpp"

#include <stdexcept>

namespace hexpert {

Json vector_to_json(const Eigen::VectorXd& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a JSON array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
  Json j = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) j.push_back(vector_to_json(m.row(r).transpose()));
  return j;
}

Eigen::MatrixXd matrix_from_json(const Json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a JSON array of rows");
  if (j.empty()) return {};
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (static_cast<Eigen::Index>(j[r].size()) != cols) throw std::invalid_argument("ragged matrix rows");
    m.row(static_cast<Eigen::Index>(r)) = vector_from_json(j[r]).transpose();
  }
  return m;
}

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

Head head_from_string(const std::string& s) {
  if (s == "softmax") return Head::Softmax;
  if (s == "gaussian") return Head::Gaussian;
  if (s == "identity") return Head::Identity;
  throw std::invalid_argument("unknown head '" + s + "'");
}

Json to_json(const NetD& net) {
  Json layers = Json::array();
  for (const auto& l : net.layers()) layers.push_back({{"W", matrix_to_json(l.W)}, {"b", vector_to_json(l.b)}});
  return {{"sizes", net.sizes()},
          {"activation", to_string(net.activation())},
          {"head", to_string(net.head())},
          {"layers", layers}};
}

NetD net_from_json(const Json& j) {
  NetD net(j.at("sizes").get<std::vector<int>>(), activation_from_string(j.at("activation").get<std::string>()),
           head_from_string(j.at("head").get<std::string>()));
  const Json& layers = j.at("layers");
  if (layers.size() != net.layers().size()) throw std::invalid_argument("net JSON: layer count");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& dst = net.layers()[l];
    const Eigen::MatrixXd W = matrix_from_json(layers[l].at("W"));
    const Eigen::VectorXd b = vector_from_json(layers[l].at("b"));
    if (W.rows() != dst.W.rows() || W.cols() != dst.W.cols() || b.size() != dst.b.size())
      throw DimensionMismatch("net JSON: layer " + std::to_string(l) + " shape");
    dst.W = W;
    dst.b = b;
  }
  return net;
}

Json to_json(const NormalWishartD& nw) {
  return {{"omega", vector_to_json(nw.omega)},
          {"lambda", nw.lambda},
          {"chol", matrix_to_json(nw.chol)},
          {"nu", nw.nu}};
}

NormalWishartD normal_wishart_from_json(const Json& j) {
  NormalWishartD nw;
  nw.omega = vector_from_json(j.at("omega"));
  nw.lambda = j.at("lambda").get<double>();
  nw.chol = matrix_from_json(j.at("chol"));
  nw.nu = j.at("nu").get<double>();
  nw.validate();
  return nw;
}

Json to_json(const ResourceParams& rp) {
  return {{"beta1", rp.beta1}, {"beta2", rp.beta2}, {"lambda1", rp.lambda1}, {"lambda2", rp.lambda2},
          {"gamma", rp.gamma}};
}

ResourceParams resource_params_from_json(const Json& j) {
  ResourceParams rp;
  rp.beta1 = j.at("beta1").get<double>();
  rp.beta2 = j.at("beta2").get<double>();
  rp.lambda1 = j.at("lambda1").get<double>();
  rp.lambda2 = j.at("lambda2").get<double>();
  rp.gamma = j.at("gamma").get<double>();
  rp.validate();
  return rp;
}

Json to_json(const oracle::TabularProblem& prob) {
  return {{"px", vector_to_json(prob.px.probs())},
          {"utility", matrix_to_json(prob.utility)},
          {"num_experts", prob.num_experts}};
}

oracle::TabularProblem tabular_problem_from_json(const Json& j) {
  oracle::TabularProblem prob;
  prob.px = Simplex(vector_from_json(j.at("px")));
  prob.utility = matrix_from_json(j.at("utility"));
  prob.num_experts = j.at("num_experts").get<int>();
  prob.validate();
  return prob;
}

Json to_json(const oracle::HierSolution& sol) {
  Json act = Json::array();
  for (const auto& a : sol.act) act.push_back(matrix_to_json(a));
  return {{"sel", matrix_to_json(sol.sel)},
          {"act", act},
          {"prior_m", vector_to_json(sol.prior_m)},
          {"prior_y", matrix_to_json(sol.prior_y)},
          {"objective", sol.objective}};
}

oracle::HierSolution hier_solution_from_json(const Json& j) {
  oracle::HierSolution sol;
  sol.sel = matrix_from_json(j.at("sel"));
  for (const auto& a : j.at("act")) sol.act.push_back(matrix_from_json(a));
  sol.prior_m = vector_from_json(j.at("prior_m"));
  sol.prior_y = matrix_from_json(j.at("prior_y"));
  sol.objective = j.at("objective").get<double>();
  return sol;
}

namespace {

Json nets_to_json(const std::vector<NetD>& nets) {
  Json out = Json::array();
  for (const auto& n : nets) out.push_back(to_json(n));
  return out;
}

Json gaussian_priors_to_json(const std::vector<supervised::GaussianPrior>& priors) {
  Json out = Json::array();
  for (const auto& p : priors) out.push_back({{"mean", vector_to_json(p.mean)}, {"var", vector_to_json(p.var)}});
  return out;
}

}  // namespace

Json to_json(const supervised::ExpertBank& bank) {
  Json prior_y = Json::array();
  for (const auto& p : bank.prior_y) prior_y.push_back(vector_to_json(p.probs()));
  return {{"selector", to_json(bank.selector)},
          {"experts", nets_to_json(bank.experts)},
          {"prior_m", vector_to_json(bank.prior_m.probs())},
          {"prior_y", prior_y},
          {"prior_reg", gaussian_priors_to_json(bank.prior_reg)},
          {"rp", to_json(bank.rp)}};
}

Json to_json(const density::DensityBank& bank) {
  Json post = Json::array(), pri = Json::array();
  for (const auto& nw : bank.posteriors) post.push_back(to_json(nw));
  for (const auto& nw : bank.priors) pri.push_back(to_json(nw));
  return {{"selector", to_json(bank.selector)},
          {"posteriors", post},
          {"priors", pri},
          {"prior_m", vector_to_json(bank.prior_m.probs())},
          {"rp", to_json(bank.rp)}};
}

Json to_json(const rl::RLBank& bank) {
  return {{"selector_actor", to_json(bank.selector_actor)},
          {"selector_critic", to_json(bank.selector_critic)},
          {"expert_actors", nets_to_json(bank.expert_actors)},
          {"expert_critics", nets_to_json(bank.expert_critics)},
          {"prior_m", vector_to_json(bank.prior_m.probs())},
          {"action_priors", gaussian_priors_to_json(bank.action_priors)},
          {"rp", to_json(bank.rp)}};
}

Json to_json(const meta::MetaBank& bank) {
  return {{"selector", to_json(bank.selector)},
          {"experts", nets_to_json(bank.experts)},
          {"prior_m", vector_to_json(bank.prior_m.probs())},
          {"priors", gaussian_priors_to_json(bank.priors)},
          {"rp", to_json(bank.rp)}};
}

}  // namespace hexpert
