#include "fixture_values.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "oracles.hpp"

namespace oracle {

using dvga::Index;
using dvga::Matrix;

namespace {

Matrix seeded_uniform(Index rows, Index cols, std::uint64_t seed, double scale) {
  dvga::Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

const std::map<std::string, std::string> kProvenance = {
    {"auc_four_scores", "pairwise counting over pos {0.9, 0.4} vs neg {0.8, 0.1}"},
    {"ap_four_scores", "rank formula, same scores"},
    {"identity_coupling_logdet", "numerical Jacobian of a zero-initialized flow (exact value 0)"},
    {"flow_logdet", "numerical Jacobian log|det| of seeded flow, K=2, width 4, M=2, four input rows"},
    {"assignment_z", "loop-by-loop dynamic assignment on the toy graph, K=2, alpha 0.4, beta 0.7, T=2"},
    {"assignment_p_node2", "final-iteration channel softmax for each neighbour of node 2"},
    {"decode_toy", "explicit-loop decoder on assignment_z"},
    {"matched_count", "best agreement over all relabelings of pred {0,0,1,1,2,2,2,0} vs truth {1,1,0,0,0,2,2,1}"},
    {"ari_six_points", "pair counting on {0,0,0,1,1,1} vs {0,0,1,1,2,2}"},
    {"kl_unscaled", "summed Gaussian KL of seeded mu/logvar (3x4)"},
};

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Matrix row(const std::vector<double>& v) {
  Matrix m(1, static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Index>(i)) = v[i];
  return m;
}

}  // namespace

dvga::FlowConfig fixture_flow_config() { return dvga::FlowConfig{2, 4, 2, 0}; }

dvga::ParamStore fixture_flow_params() {
  dvga::Rng rng(101);
  dvga::ParamStore p;
  dvga::init_flow_params(p, fixture_flow_config(), rng);
  std::uint64_t seed = 200;
  for (const auto& entry : p.entries()) {
    Matrix& m = p.get_mut(entry.first);
    m = seeded_uniform(m.rows(), m.cols(), ++seed, 0.5);
  }
  return p;
}

Matrix fixture_flow_inputs() { return seeded_uniform(4, 8, 300, 1.5); }

Matrix fixture_projection() {
  Matrix c = seeded_uniform(12, 6, 400, 1.0);
  for (Index r = 0; r < c.rows(); ++r) {
    for (Index k = 0; k < 2; ++k) c.row(r).segment(k * 3, 3).normalize();
  }
  return c;
}

FixtureValues compute_fixture_values() {
  FixtureValues v;
  const std::vector<double> pos{0.9, 0.4}, neg{0.8, 0.1};
  v["auc_four_scores"] = scalar(pairwise_auc(pos, neg));
  v["ap_four_scores"] = scalar(rank_ap(pos, neg));

  // Identity coupling: zero-initialized output layers.
  dvga::Rng rng(102);
  dvga::ParamStore identity;
  dvga::init_flow_params(identity, fixture_flow_config(), rng);
  const Matrix x = fixture_flow_inputs();
  auto row_logdet = [&x](const dvga::ParamStore& p, Index r) {
    auto map = [&p](const Eigen::VectorXd& z) {
      return Eigen::VectorXd(dvga::flow_forward(p, fixture_flow_config(), Matrix(z.transpose())).row(0).transpose());
    };
    return log_abs_det(numerical_jacobian(map, x.row(r).transpose()));
  };
  v["identity_coupling_logdet"] = scalar(row_logdet(identity, 0));
  const dvga::ParamStore flow = fixture_flow_params();
  Matrix logdets(1, x.rows());
  for (Index r = 0; r < x.rows(); ++r) logdets(0, r) = row_logdet(flow, r);
  v["flow_logdet"] = logdets;

  const dvga::Graph g = toy_graph();
  const AssignmentResult a = naive_assignment(fixture_projection(), neighbour_lists(g), kFixtureAlpha, kFixtureBeta,
                                              2, kFixtureIterations);
  v["assignment_z"] = a.z;
  // Final-iteration channel distribution p for every arc of node 2, flattened.
  std::vector<double> p_node2;
  for (const auto& per_neighbour : a.p.back()[2]) p_node2.insert(p_node2.end(), per_neighbour.begin(), per_neighbour.end());
  v["assignment_p_node2"] = row(p_node2);
  v["decode_toy"] = naive_decode(a.z, 2);

  const std::vector<int> pred{0, 0, 1, 1, 2, 2, 2, 0}, truth{1, 1, 0, 0, 0, 2, 2, 1};
  v["matched_count"] = scalar(brute_force_matched(pred, truth));
  const std::vector<int> ari_a{0, 0, 0, 1, 1, 1}, ari_b{0, 0, 1, 1, 2, 2};
  v["ari_six_points"] = scalar(pair_counting_ari(ari_a, ari_b));

  const Matrix mu = seeded_uniform(3, 4, 500, 1.0), logvar = seeded_uniform(3, 4, 501, 1.0);
  v["kl_unscaled"] = scalar(naive_gaussian_kl(mu, logvar));
  return v;
}

void write_fixture_values(const std::string& path, const FixtureValues& values) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# name rows cols values (row-major); regenerate with regenerate_oracles\n";
  for (const auto& [name, note] : kProvenance) out << "# " << name << ": " << note << '\n';
  char buf[40];
  for (const auto& [name, m] : values) {
    out << name << ' ' << m.rows() << ' ' << m.cols();
    for (Index i = 0; i < m.size(); ++i) {
      std::snprintf(buf, sizeof buf, " %.17g", m.data()[i]);
      out << buf;
    }
    out << '\n';
  }
}

FixtureValues read_fixture_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  FixtureValues values;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string name;
    Index rows = 0, cols = 0;
    ss >> name >> rows >> cols;
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) {
      if (!(ss >> m.data()[i])) throw std::runtime_error("short fixture row: " + name);
    }
    values[name] = m;
  }
  return values;
}

void write_toy_graph(const std::string& dir) {
  std::filesystem::create_directories(dir);
  const dvga::Graph g = toy_graph();
  std::ofstream edges(dir + "/edges.txt"), features(dir + "/features.txt"), labels(dir + "/labels.txt");
  for (const dvga::Edge& e : g.edges()) edges << e.u << ' ' << e.v << '\n';
  for (Index i = 0; i < g.num_nodes(); ++i) {
    features << i;
    for (Index j = 0; j < g.features().cols(); ++j) features << ' ' << g.features()(i, j);
    features << '\n';
    labels << i << ' ' << g.labels()[0][static_cast<std::size_t>(i)] << '\n';
  }
}

}  // namespace oracle
