#include "carflow/landscape.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "carflow/errors.hpp"

namespace carflow {

std::string grid_kind_name(GridKind kind) {
  switch (kind) {
    case GridKind::kEnergy: return "energy";
    case GridKind::kConflictW: return "conflict_w";
    case GridKind::kDeltaE: return "delta_e";
    case GridKind::kLearnedValue: return "learned_value";
  }
  throw ConfigError("bad grid kind enum");
}

GridKind grid_kind_from_name(const std::string& name) {
  if (name == "energy") return GridKind::kEnergy;
  if (name == "conflict_w") return GridKind::kConflictW;
  if (name == "delta_e") return GridKind::kDeltaE;
  if (name == "learned_value") return GridKind::kLearnedValue;
  throw ConfigError("unknown grid kind: " + name);
}

static void check_spec(const GridSpec& spec) {
  if (spec.nx < 2 || spec.ny < 2) throw ConfigError("grid needs nx, ny >= 2");
  if (!(spec.x_max > spec.x_min) || !(spec.y_max > spec.y_min))
    throw ConfigError("grid bounds must be increasing");
}

double grid_x(const GridSpec& spec, int ix) {
  return spec.x_min + (spec.x_max - spec.x_min) * static_cast<double>(ix) /
                          static_cast<double>(spec.nx - 1);
}

double grid_y(const GridSpec& spec, int iy) {
  return spec.y_min + (spec.y_max - spec.y_min) * static_cast<double>(iy) /
                          static_cast<double>(spec.ny - 1);
}

namespace {

double energy_at(const RewardSet& rewards, const Eigen::Vector2d& p) {
  double r = 0.0;
  for (int j = 0; j < rewards.num_terms(); ++j) r += reward_value(rewards, j, p);
  return -r;
}

Eigen::Vector2d energy_grad(const RewardSet& rewards, const Eigen::Vector2d& p) {
  Eigen::Vector2d g = Eigen::Vector2d::Zero();
  for (int j = 0; j < rewards.num_terms(); ++j) g -= reward_grad(rewards, j, p);
  return g;
}

}  // namespace

Grid landscape_grid(GridKind kind, const RewardSet& rewards, const GuidanceConfig& gcfg,
                    const Velocity* vel, const ValueFunction* value, const GridSpec& spec) {
  check_spec(spec);
  if (kind == GridKind::kLearnedValue && value == nullptr)
    throw ConfigError("learned_value grid needs a value function");
  const Velocity still = [](const Eigen::Vector2d&, double) { return Eigen::Vector2d::Zero(); };
  const Velocity& v = vel ? *vel : still;

  Grid grid;
  grid.spec = spec;
  grid.kind = kind;
  grid.values.resize(spec.ny, spec.nx);
  for (int iy = 0; iy < spec.ny; ++iy) {
    for (int ix = 0; ix < spec.nx; ++ix) {
      const Eigen::Vector2d p(grid_x(spec, ix), grid_y(spec, iy));
      double out = 0.0;
      switch (kind) {
        case GridKind::kEnergy:
          out = energy_at(rewards, p);
          break;
        case GridKind::kConflictW:
          out = conflict_score(per_reward_guidance(v, rewards, p, spec.t, gcfg.scale),
                               gcfg.epsilon)
                    .w;
          break;
        case GridKind::kDeltaE:
          out = energy_dissipation(per_reward_guidance(v, rewards, p, spec.t, gcfg.scale));
          break;
        case GridKind::kLearnedValue:
          out = value_of(*value, p, spec.t);
          break;
      }
      grid.values(iy, ix) = out;
    }
  }
  return grid;
}

namespace {

void put_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

double take_double(std::string_view& sv) {
  double v = 0.0;
  const auto res = std::from_chars(sv.data(), sv.data() + sv.size(), v);
  if (res.ec != std::errc{}) throw ConfigError("bad number in grid csv");
  sv.remove_prefix(static_cast<std::size_t>(res.ptr - sv.data()));
  if (!sv.empty() && sv.front() == ',') sv.remove_prefix(1);
  return v;
}

}  // namespace

std::string grid_to_csv(const Grid& grid) {
  std::string out;
  out += "# bounds,";
  put_double(out, grid.spec.x_min); out += ',';
  put_double(out, grid.spec.x_max); out += ',';
  put_double(out, grid.spec.y_min); out += ',';
  put_double(out, grid.spec.y_max); out += '\n';
  out += "# resolution," + std::to_string(grid.spec.nx) + ',' + std::to_string(grid.spec.ny) + '\n';
  out += "# kind," + grid_kind_name(grid.kind) + '\n';
  out += "# t,";
  put_double(out, grid.spec.t); out += '\n';
  for (int iy = 0; iy < grid.spec.ny; ++iy) {
    for (int ix = 0; ix < grid.spec.nx; ++ix) {
      if (ix) out += ',';
      put_double(out, grid.values(iy, ix));
    }
    out += '\n';
  }
  return out;
}

Grid grid_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Grid grid;
  auto expect_prefix = [&](const std::string& prefix) -> std::string_view {
    if (!std::getline(in, line) || line.rfind(prefix, 0) != 0)
      throw ConfigError("grid csv missing header line " + prefix);
    return std::string_view(line).substr(prefix.size());
  };
  std::string_view sv = expect_prefix("# bounds,");
  grid.spec.x_min = take_double(sv);
  grid.spec.x_max = take_double(sv);
  grid.spec.y_min = take_double(sv);
  grid.spec.y_max = take_double(sv);
  sv = expect_prefix("# resolution,");
  grid.spec.nx = static_cast<int>(take_double(sv));
  grid.spec.ny = static_cast<int>(take_double(sv));
  sv = expect_prefix("# kind,");
  grid.kind = grid_kind_from_name(std::string(sv));
  sv = expect_prefix("# t,");
  grid.spec.t = take_double(sv);
  check_spec(grid.spec);
  grid.values.resize(grid.spec.ny, grid.spec.nx);
  for (int iy = 0; iy < grid.spec.ny; ++iy) {
    if (!std::getline(in, line)) throw ConfigError("grid csv truncated");
    std::string_view row(line);
    for (int ix = 0; ix < grid.spec.nx; ++ix) grid.values(iy, ix) = take_double(row);
  }
  return grid;
}

void save_grid(const Grid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << grid_to_csv(grid);
}

Grid load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return grid_from_csv(buf.str());
}

namespace {

/// Barzilai-Borwein descent on the energy; returns the lowest-gradient point
/// visited, or nothing if the iterate leaves the sane region.
std::optional<Eigen::Vector2d> descend(const RewardSet& rewards, Eigen::Vector2d x,
                                       int max_iters) {
  Eigen::Vector2d g = energy_grad(rewards, x);
  Eigen::Vector2d best = x;
  double best_norm = g.norm();
  double alpha = 1.0;
  for (int it = 0; it < max_iters && g.norm() > 1e-11; ++it) {
    const Eigen::Vector2d x_new = x - alpha * g;
    if (!x_new.allFinite() || x_new.norm() > 1e3) return std::nullopt;
    const Eigen::Vector2d g_new = energy_grad(rewards, x_new);
    const Eigen::Vector2d dx = x_new - x;
    const Eigen::Vector2d dg = g_new - g;
    const double dgg = dg.squaredNorm();
    alpha = dgg > 0.0 ? std::clamp(dx.dot(dg) / dgg, 1e-6, 1e4) : 1.0;
    x = x_new;
    g = g_new;
    if (g.norm() < best_norm) {
      best = x;
      best_norm = g.norm();
    }
  }
  return best;
}

Eigen::Matrix2d fd_hessian(const RewardSet& rewards, const Eigen::Vector2d& x) {
  const double h = 1e-4;
  Eigen::Matrix2d hess;
  for (int i = 0; i < 2; ++i) {
    Eigen::Vector2d e = Eigen::Vector2d::Zero();
    e(i) = h;
    hess.col(i) = (energy_grad(rewards, x + e) - energy_grad(rewards, x - e)) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

}  // namespace

std::vector<Eigen::Vector2d> intended_optima(const RewardSet& rewards) {
  std::vector<Eigen::Vector2d> pts;
  for (const RewardTerm& term : rewards.terms) {
    if (const auto* goal = std::get_if<GoalReward>(&term)) {
      pts.insert(pts.end(), goal->centers.begin(), goal->centers.end());
    } else if (const auto* cls = std::get_if<ClassifierReward>(&term)) {
      const auto& row = rewards.labels.labels[static_cast<std::size_t>(cls->classifier)];
      for (std::size_t k = 0; k < row.size(); ++k)
        if (row[k] == cls->target_label) pts.push_back(rewards.gm.means[k]);
    }
    // obstacles repel; they carry no intended optimum
  }
  return pts;
}

std::vector<Minimum> find_minima(const RewardSet& rewards, const GridSpec& spec,
                                 const MinimaConfig& cfg,
                                 const std::vector<Eigen::Vector2d>& known_optima) {
  check_spec(spec);
  Eigen::MatrixXd e(spec.ny, spec.nx);
  for (int iy = 0; iy < spec.ny; ++iy)
    for (int ix = 0; ix < spec.nx; ++ix)
      e(iy, ix) = energy_at(rewards, {grid_x(spec, ix), grid_y(spec, iy)});

  // Candidates: discrete 8-neighborhood minima, plus any cell whose analytic
  // gradient is already tiny (catches very flat basins the lattice comparison
  // can miss at the border).
  std::vector<Eigen::Vector2d> candidates;
  for (int iy = 1; iy + 1 < spec.ny; ++iy) {
    for (int ix = 1; ix + 1 < spec.nx; ++ix) {
      bool low = true;
      for (int dy = -1; dy <= 1 && low; ++dy)
        for (int dx = -1; dx <= 1 && low; ++dx)
          if (dx != 0 || dy != 0) low = e(iy, ix) <= e(iy + dy, ix + dx);
      const Eigen::Vector2d p(grid_x(spec, ix), grid_y(spec, iy));
      if (low || energy_grad(rewards, p).norm() < cfg.grad_tol) candidates.push_back(p);
    }
  }

  std::vector<Minimum> out;
  for (const Eigen::Vector2d& start : candidates) {
    const auto refined = descend(rewards, start, cfg.max_iters);
    if (!refined) continue;
    const Eigen::Vector2d& x = *refined;
    if (energy_grad(rewards, x).norm() >= cfg.grad_tol) continue;
    const Eigen::Matrix2d hess = fd_hessian(rewards, x);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(hess);
    if (eig.eigenvalues()(0) <= 1e-9) continue;  // saddle, max, or degenerate
    bool dup = false;
    for (const Minimum& m : out)
      if ((m.x - x).norm() < cfg.merge_radius) dup = true;
    if (dup) continue;
    Minimum m;
    m.x = x;
    m.energy = energy_at(rewards, x);
    m.hess_eigs = eig.eigenvalues();
    m.spurious = true;
    for (const Eigen::Vector2d& opt : known_optima)
      if ((x - opt).norm() <= cfg.exclusion_radius) m.spurious = false;
    out.push_back(m);
  }
  std::sort(out.begin(), out.end(), [](const Minimum& a, const Minimum& b) {
    return a.x(0) != b.x(0) ? a.x(0) < b.x(0) : a.x(1) < b.x(1);
  });
  return out;
}

std::vector<Minimum> find_spurious_minima(const RewardSet& rewards, const GridSpec& spec,
                                          const MinimaConfig& cfg,
                                          const std::vector<Eigen::Vector2d>& known_optima) {
  const double dx = (spec.x_max - spec.x_min) / static_cast<double>(spec.nx - 1);
  const double dy = (spec.y_max - spec.y_min) / static_cast<double>(spec.ny - 1);
  if (std::hypot(dx, dy) >= cfg.exclusion_radius)
    throw ConfigError("grid cell diameter must be below exclusion_radius");
  std::vector<Minimum> out;
  for (const Minimum& m : find_minima(rewards, spec, cfg, known_optima))
    if (m.spurious) out.push_back(m);
  return out;
}

}  // namespace carflow
