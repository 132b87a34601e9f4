#include "heatlab/dynamics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

namespace heatlab {

void open_log(BondNoiseLog& log, BondNoiseLog::Kind kind, std::size_t n_sites, double t0) {
  if (log.records.empty()) {
    log.kind = kind;
    log.n_sites = n_sites;
    return;
  }
  if (log.kind != kind || log.n_sites != n_sites) throw ValidationError("noise log belongs to a different process");
  if (!log.closed() || log.records.back().t != t0)
    throw ValidationError("noise log does not end at the current time");
  log.records.pop_back();
}

void close_log(BondNoiseLog& log, double t1) { log.records.push_back({kLogSentinelBond, t1, 0.0}); }

void OccupationIntegrals::add_trapezoid(const Vector& before, const Vector& after, double dt) {
  const Eigen::Index n = before.size();
  const double h = 0.5 * dt;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index k = j + 1 == n ? 0 : j + 1;
    site[j] += h * (before[j] + after[j]);
    pair[j] += h * (before[j] * before[k] + after[j] * after[k]);
  }
}

double truncate_negative(Vector& z) {
  const Eigen::Index n = z.size();
  if (z.sum() < 0.0) throw NumericFailure("negative total energy; truncation impossible");
  double moved = 0.0;
  // Take each deficit half from the left and half from the right, walking outwards past
  // empty sites; whatever one side cannot supply is taken from the other.
  const auto drain = [&](Eigen::Index from, Eigen::Index step, double need) {
    Eigen::Index k = from;
    for (Eigen::Index visited = 0; need > 0.0 && visited < n; ++visited) {
      k = ((k + step) % n + n) % n;
      if (z[k] <= 0.0) continue;
      const double take = std::min(z[k], need);
      z[k] -= take;
      need -= take;
    }
    return need;
  };
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(z[j] < 0.0)) continue;
    const double deficit = -z[j];
    moved += deficit;
    z[j] = 0.0;
    double left = drain(j, -1, 0.5 * deficit);
    double right = drain(j, 1, 0.5 * deficit + left);
    if (right > 0.0) right = drain(j, -1, right);
    if (right > 1e-300) throw NumericFailure("truncation could not cover an energy deficit");
  }
  return moved;
}

BondDiffusion::BondDiffusion(ModelSpec model, const TiltField* tilt, StepOptions options)
    : model_(std::move(model)), tilt_(tilt), options_(options) {
  if (model_.kind() == ModelKind::Kmp) throw ValidationError("KMP is a jump process, not a bond diffusion");
  if (tilt_ && model_.kind() != ModelKind::Bep) throw ValidationError("weak asymmetry is defined for BEP(m) only");
  if (!(options_.c_safe > 0.0)) throw ValidationError("c_safe must be positive");
  if (options_.max_refine_depth < 0) throw ValidationError("refinement depth must be >= 0");
}

Vector BondDiffusion::tilt_increments(std::size_t n, double t) const {
  Vector e = Vector::Zero(static_cast<Eigen::Index>(n));
  if (!tilt_) return e;
  Vector h(static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j)
    h[static_cast<Eigen::Index>(j)] = tilt_->interpolate(t, static_cast<double>(j + 1) / static_cast<double>(n));
  for (std::size_t j = 0; j < n; ++j)
    e[static_cast<Eigen::Index>(j)] = h[static_cast<Eigen::Index>((j + 1) % n)] - h[static_cast<Eigen::Index>(j)];
  return e;
}

double BondDiffusion::bond_tilt(std::size_t n, std::size_t bond, double t) const {
  if (!tilt_) return 0.0;
  const double nn = static_cast<double>(n);
  const double left = tilt_->interpolate(t, static_cast<double>(bond + 1) / nn);
  const double right = tilt_->interpolate(t, static_cast<double>((bond + 1) % n + 1) / nn);
  return right - left;
}

double BondDiffusion::stable_dt(const Vector& z, double t) const {
  const Eigen::Index n = z.size();
  const double m = model_.m();
  const bool gbep = model_.kind() == ModelKind::Gbep;
  const Vector e = tilt_increments(static_cast<std::size_t>(n), t);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index k = j + 1 == n ? 0 : j + 1;
    const double zmax = std::max(std::max(z[j], z[k]), 0.0);
    const double a2 = gbep ? model_.rate().squared(std::max(0.5 * (z[j] + z[k]), 0.0)) : 1.0;
    worst = std::max(worst, a2 * (m + zmax) + std::abs(e[j]) * zmax);
  }
  if (!(worst > 0.0)) return std::numeric_limits<double>::infinity();
  const double nn = static_cast<double>(n);
  return options_.c_safe / (nn * nn * worst);
}

double BondDiffusion::bond_flux(const Vector& z, std::size_t bond, double t, double h, double w, double w_left,
                                double w_right) const {
  const auto n = static_cast<std::size_t>(z.size());
  const auto j = static_cast<Eigen::Index>(bond);
  const auto k = static_cast<Eigen::Index>((bond + 1) % n);
  const double nn = static_cast<double>(n);
  const auto pos = [&](Eigen::Index i) { return std::max(z[(i + z.size()) % z.size()], 0.0); };
  const bool gbep = model_.kind() == ModelKind::Gbep;
  const auto rate = [&](Eigen::Index b) { return gbep ? model_.rate()(0.5 * (pos(b) + pos(b + 1))) : 1.0; };
  const double amp = std::sqrt(pos(j) * pos(k));
  const double a = rate(j);
  double flux = 2.0 * nn * a * amp * w + nn * nn * h * a * a * model_.m() * (z[k] - z[j]);
  if (tilt_) flux -= nn * nn * h * bond_tilt(n, bond, t) * z[j] * z[k];
  if (milstein_active()) {
    const double cross = -rate(j - 1) * std::sqrt(pos(j - 1) * pos(k)) * w_left + rate(j + 1) * std::sqrt(pos(j) * pos(j + 2)) * w_right;
    flux += nn * nn * a * (a * (z[k] - z[j]) * (w * w - h) + cross * w);
  }
  return flux;
}

void BondDiffusion::full_flux(const Vector& z, double t, double h, const std::vector<double>& w,
                              std::vector<double>& flux) const {
  const Eigen::Index n = z.size();
  const auto at = [&](Eigen::Index b) { return w[static_cast<std::size_t>((b + n) % n)]; };
  if (model_.kind() == ModelKind::Gbep) {
    for (Eigen::Index j = 0; j < n; ++j)
      flux[static_cast<std::size_t>(j)] = bond_flux(z, static_cast<std::size_t>(j), t, h, at(j), at(j - 1), at(j + 1));
    return;
  }
  const double nn = static_cast<double>(n);
  const double noise_scale = 2.0 * nn;
  const double drift_scale = nn * nn * h;
  const double m = model_.m();
  const double* zp = z.data();
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index k = j + 1 == n ? 0 : j + 1;
    const double amp = std::sqrt(std::max(zp[j], 0.0) * std::max(zp[k], 0.0));
    flux[static_cast<std::size_t>(j)] = noise_scale * amp * w[static_cast<std::size_t>(j)] + drift_scale * m * (zp[k] - zp[j]);
  }
  if (tilt_) {
    const Vector e = tilt_increments(static_cast<std::size_t>(n), t);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index k = j + 1 == n ? 0 : j + 1;
      flux[static_cast<std::size_t>(j)] -= drift_scale * e[j] * zp[j] * zp[k];
    }
  }
  if (milstein_active()) {
    const auto pos = [&](Eigen::Index i) { return std::max(zp[(i + n) % n], 0.0); };
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::Index k = j + 1 == n ? 0 : j + 1;
      const double wj = at(j);
      const double cross = -std::sqrt(pos(j - 1) * pos(k)) * at(j - 1) + std::sqrt(pos(j) * pos(j + 2)) * at(j + 1);
      flux[static_cast<std::size_t>(j)] += nn * nn * ((zp[k] - zp[j]) * (wj * wj - h) + cross * wj);
    }
  }
}

namespace {

using Index = Eigen::Index;

// A boundary site of a refinement is safe when its energy exceeds this multiple of the
// step's change and noise scale there.
constexpr double kBoundarySafety = 3.0;

// One node of a refinement tree: a set of bonds integrated together over [a, b]. Sites
// touched by these bonds may also receive a constant-rate flux from a bond frozen higher up.
struct Node {
  double a = 0.0, b = 0.0;
  std::vector<Index> bonds;   // ascending
  std::vector<double> w;
  std::vector<Index> sites;   // ascending, exactly the sites touched by `bonds`
  std::vector<double> ext;    // flux per unit time into each site
  std::vector<Index> fed_by;  // frozen bond feeding the site, or -1
  std::vector<int> fed_at;    // depth of the node that froze it
  // Lookup tables from lattice index to position in `sites` / `bonds` (valid only where the
  // entry points back to the same index).
  std::vector<std::uint32_t> site_slot, bond_slot;

  void index(Index n) {
    site_slot.resize(static_cast<std::size_t>(n));
    bond_slot.resize(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < sites.size(); ++i) site_slot[static_cast<std::size_t>(sites[i])] = static_cast<std::uint32_t>(i);
    for (std::size_t k = 0; k < bonds.size(); ++k) bond_slot[static_cast<std::size_t>(bonds[k])] = static_cast<std::uint32_t>(k);
  }
  std::size_t site_pos(Index s) const { return site_slot[static_cast<std::size_t>(s)]; }
  std::size_t bond_pos(Index b) const { return bond_slot[static_cast<std::size_t>(b)]; }
  bool has_site(Index s) const {
    const std::size_t p = site_pos(s);
    return p < sites.size() && sites[p] == s;
  }
  bool has_bond(Index b) const {
    const std::size_t p = bond_pos(b);
    return p < bonds.size() && bonds[p] == b;
  }
};

// A deficit caused by the bond frozen at `depth`; that node must refine it as well.
struct Failure {
  int depth = -1;
  Index bond = -1;
  explicit operator bool() const { return depth >= 0; }
};

struct Split {
  std::vector<std::size_t> keep;  // positions into node.bonds
  std::vector<double> w1;
};

bool is_split(const NoiseRecord& r) { return r.bond != kLogSentinelBond && (r.bond & kLogSplitFlag) != 0; }

// Open-addressing map from (bond, interval midpoint) to the bridge value drawn there.
class BridgeCache {
 public:
  const double* find(Index bond, double mid) const {
    if (slots_.empty()) return nullptr;
    for (std::size_t i = hash(bond, mid) & mask();; i = (i + 1) & mask()) {
      const Slot& s = slots_[i];
      if (s.generation != generation_) return nullptr;
      if (s.bond == bond && s.mid == mid) return &s.value;
    }
  }

  void insert(Index bond, double mid, double value) {
    if (2 * (used_ + 1) > slots_.size()) grow();
    place(bond, mid, value);
  }

  void clear() {
    ++generation_;
    used_ = 0;
  }

 private:
  struct Slot {
    Index bond = 0;
    double mid = 0.0;
    double value = 0.0;
    std::uint64_t generation = 0;
  };

  static std::size_t hash(Index bond, double mid) {
    return static_cast<std::size_t>(splitmix64(std::bit_cast<std::uint64_t>(mid) ^ static_cast<std::uint64_t>(bond)));
  }
  std::size_t mask() const { return slots_.size() - 1; }

  void place(Index bond, double mid, double value) {
    std::size_t i = hash(bond, mid) & mask();
    while (slots_[i].generation == generation_) i = (i + 1) & mask();
    slots_[i] = {bond, mid, value, generation_};
    ++used_;
  }

  void grow() {
    std::vector<Slot> old;
    old.swap(slots_);
    slots_.assign(std::max<std::size_t>(64, 2 * old.size()), Slot{});
    const std::uint64_t live = generation_;
    ++generation_;
    used_ = 0;
    for (const Slot& s : old)
      if (s.generation == live) place(s.bond, s.mid, s.value);
  }

  std::vector<Slot> slots_;
  std::uint64_t generation_ = 1;
  std::size_t used_ = 0;
};

// Storage of one tree depth, reused across nodes and steps.
struct Level {
  Node node;
  std::vector<double> flux, trial;
  Split split;
  std::vector<char> kept;
  std::vector<Index> wanted;
};

struct Event {
  enum Kind { Site, Bond, Noise } kind;
  Index index;
  double t0, t1, v, zl, zr;
};

struct Workspace {
  std::deque<Level> levels;
  std::vector<Event> events;
  std::vector<std::pair<Index, double>> journal;
  BridgeCache cache;

  Level& level(int depth) {
    while (static_cast<int>(levels.size()) <= depth) levels.emplace_back();
    return levels[static_cast<std::size_t>(depth)];
  }
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

// Runs one diffusion step as a refinement tree. In live mode the tree is grown on demand
// (bridge values are cached per bond and interval, so a retried subtree sees the same
// Brownian path); in replay mode it is read from a log. Observer events are buffered and
// released once the step is final.
class Engine {
 public:
  Engine(const BondDiffusion& process, Vector& z, StepStats& stats, DiffusionObserver* observer, RandomStream* rng,
         BondNoiseLog* log, const BondNoiseLog* replay)
      : process_(process), z_(z), n_(z.size()), stats_(stats), observer_(observer), rng_(rng), log_(log),
        replay_(replay), ws_(workspace()) {
    ws_.journal.clear();
    ws_.cache.clear();
    ws_.events.clear();
  }

  std::size_t cursor = 0;

  void step(double t0, double t1, const Vector& w) {
    Node& node = ws_.level(0).node;
    const auto n = static_cast<std::size_t>(n_);
    node.a = t0;
    node.b = t1;
    if (node.bonds.size() != n) {
      node.bonds.resize(n);
      for (Index j = 0; j < n_; ++j) node.bonds[static_cast<std::size_t>(j)] = j;
      node.sites = node.bonds;
      node.ext.assign(n, 0.0);
      node.fed_by.assign(n, -1);
      node.fed_at.assign(n, -1);
      node.index(n_);
    }
    node.w.assign(w.data(), w.data() + n_);
    for (Index j = 0; j < n_; ++j) {
      if (log_) log_->records.push_back({static_cast<std::uint32_t>(j), t0, w[j]});
      push({Event::Noise, j, t0, t1, w[j], 0.0, 0.0});
    }
    if (run(0)) throw NumericFailure("refinement failure escaped the step");
    flush();
    ws_.journal.clear();
    ws_.cache.clear();
  }

 private:
  struct Mark {
    std::size_t journal, events, log;
    StepStats stats;
  };

  bool live() const { return replay_ == nullptr; }
  Index right_of(Index b) const { return b + 1 == n_ ? 0 : b + 1; }
  Index wrap(Index i) const { return ((i % n_) + n_) % n_; }

  void push(const Event& e) {
    if (observer_) ws_.events.push_back(e);
  }

  void flush() {
    for (const Event& e : ws_.events) {
      const auto i = static_cast<std::size_t>(e.index);
      switch (e.kind) {
        case Event::Site: observer_->site(i, e.t0, e.t1, e.v); break;
        case Event::Bond: observer_->bond(i, e.t0, e.t1, e.v, e.zl, e.zr); break;
        case Event::Noise: observer_->noise(i, e.t0, e.t1, e.v); break;
      }
    }
    ws_.events.clear();
  }

  void set(Index i, double v) {
    if (open_marks_ > 0) ws_.journal.emplace_back(i, z_[i]);
    z_[i] = v;
  }

  Mark mark() const { return {ws_.journal.size(), ws_.events.size(), log_ ? log_->records.size() : 0, stats_}; }

  void rollback(const Mark& m) {
    auto& journal = ws_.journal;
    while (journal.size() > m.journal) {
      z_[journal.back().first] = journal.back().second;
      journal.pop_back();
    }
    ws_.events.resize(m.events);
    if (log_) log_->records.resize(m.log);
    stats_ = m.stats;
  }

  Failure run(int depth) {
    Level& lv = ws_.level(depth);
    const Node& node = lv.node;
    const double h = node.b - node.a;
    const std::size_t nb = node.bonds.size();
    auto& flux = lv.flux;
    auto& trial = lv.trial;
    flux.resize(nb);
    trial.resize(node.sites.size());
    if (static_cast<Index>(nb) == n_) {
      process_.full_flux(z_, node.a, h, node.w, flux);
      double prev = flux[nb - 1];
      for (std::size_t j = 0; j < nb; ++j) {
        trial[j] = z_[static_cast<Index>(j)] + flux[j] - prev;
        prev = flux[j];
      }
    } else {
      for (std::size_t i = 0; i < node.sites.size(); ++i) trial[i] = z_[node.sites[i]] + node.ext[i] * h;
      for (std::size_t k = 0; k < nb; ++k) {
        const Index b = node.bonds[k];
        // Neighbouring bonds outside the node contribute no increment over its interval.
        const Index l = wrap(b - 1), r = right_of(b);
        const double wl = node.has_bond(l) ? node.w[node.bond_pos(l)] : 0.0;
        const double wr = node.has_bond(r) ? node.w[node.bond_pos(r)] : 0.0;
        flux[k] = process_.bond_flux(z_, static_cast<std::size_t>(b), node.a, h, node.w[k], wl, wr);
        trial[node.site_pos(b)] += flux[k];
        trial[node.site_pos(right_of(b))] -= flux[k];
      }
    }
    for (const double v : trial)
      if (!std::isfinite(v)) throw NumericFailure("non-finite energy after diffusion step");

    if (live()) {
      for (std::size_t i = 0; i < trial.size(); ++i)
        if (trial[i] < 0.0 && node.fed_by[i] >= 0 && trial[i] - node.ext[i] * h >= 0.0)
          return {node.fed_at[i], node.fed_by[i]};
    }

    if (!(live() ? choose(lv, depth) : read_split(lv))) {
      commit_leaf(lv);
      return {};
    }
    const Mark start = mark();
    ++open_marks_;
    for (;;) {
      ++stats_.refinements;
      emit_split(lv);
      const Failure f = refine(depth);
      if (!f || f.depth != depth) {
        --open_marks_;
        return f;
      }
      rollback(start);
      extend(lv, f.bond);
    }
  }

  Failure refine(int depth) {
    Level& lv = ws_.level(depth);
    Node& child = ws_.level(depth + 1).node;
    const Node& node = lv.node;
    const Split& split = lv.split;
    const double h = node.b - node.a;
    child.bonds.clear();
    for (const std::size_t k : split.keep) child.bonds.push_back(node.bonds[k]);
    child.sites.clear();
    for (const Index b : child.bonds) {
      child.sites.push_back(b);
      child.sites.push_back(right_of(b));
    }
    std::sort(child.sites.begin(), child.sites.end());
    child.sites.erase(std::unique(child.sites.begin(), child.sites.end()), child.sites.end());
    child.index(n_);
    const std::size_t ns = child.sites.size();
    child.ext.resize(ns);
    child.fed_by.resize(ns);
    child.fed_at.resize(ns);
    for (std::size_t i = 0; i < ns; ++i) {
      const std::size_t p = node.site_pos(child.sites[i]);
      child.ext[i] = node.ext[p];
      child.fed_by[i] = node.fed_by[p];
      child.fed_at[i] = node.fed_at[p];
    }

    // Bonds outside the refinement are applied over the whole node with their Euler flux.
    lv.kept.assign(node.bonds.size(), 0);
    for (const std::size_t k : split.keep) lv.kept[k] = 1;
    for (std::size_t k = 0; k < node.bonds.size(); ++k) {
      if (lv.kept[k]) continue;
      const Index b = node.bonds[k];
      const Index r = right_of(b);
      push({Event::Bond, b, node.a, node.b, node.w[k], z_[b], z_[r]});
      const double rate = lv.flux[k] / h;
      for (const auto& [site, v] : {std::pair{b, rate}, std::pair{r, -rate}}) {
        if (!child.has_site(site)) continue;
        const std::size_t p = child.site_pos(site);
        child.ext[p] += v;
        child.fed_by[p] = b;
        child.fed_at[p] = depth;
      }
    }
    // Sites no longer touched by refined bonds take their full-node value now.
    for (std::size_t i = 0; i < node.sites.size(); ++i) {
      const Index s = node.sites[i];
      if (child.has_site(s)) continue;
      push({Event::Site, s, node.a, node.b, z_[s], 0.0, 0.0});
      set(s, lv.trial[i]);
    }

    const double mid = node.a + 0.5 * h;
    child.a = node.a;
    child.b = mid;
    child.w = split.w1;
    if (const Failure f = run(depth + 1)) return f;
    child.a = mid;
    child.b = node.b;
    for (std::size_t c = 0; c < split.keep.size(); ++c) child.w[c] = node.w[split.keep[c]] - split.w1[c];
    return run(depth + 1);
  }

  void commit_leaf(const Level& lv) {
    const Node& node = lv.node;
    for (const Index s : node.sites) push({Event::Site, s, node.a, node.b, z_[s], 0.0, 0.0});
    for (std::size_t k = 0; k < node.bonds.size(); ++k) {
      const Index b = node.bonds[k];
      push({Event::Bond, b, node.a, node.b, node.w[k], z_[b], z_[right_of(b)]});
    }
    bool negative = false;
    for (std::size_t i = 0; i < node.sites.size(); ++i) {
      set(node.sites[i], lv.trial[i]);
      negative = negative || lv.trial[i] < 0.0;
    }
    ++stats_.leaves;
    if (negative) {
      if (open_marks_ > 0)
        for (Index j = 0; j < n_; ++j) ws_.journal.emplace_back(j, z_[j]);
      ++stats_.truncations;
      stats_.truncated_mass += truncate_negative(z_);
    }
  }

  // Whether boundary site q can absorb the refinement's deviation from its Euler value.
  bool safe(const Level& lv, Index q) const {
    const Node& node = lv.node;
    const double h = node.b - node.a;
    const double zq = std::max(z_[q], 0.0);
    const double nb = std::max(std::max(z_[wrap(q - 1)], z_[wrap(q + 1)]), 0.0);
    const double noise = 2.0 * static_cast<double>(n_) * std::sqrt(h * zq * nb);
    const double change = std::abs(lv.trial[node.site_pos(q)] - z_[q]);
    return zq >= kBoundarySafety * (change + noise);
  }

  // Adds to `wanted` the node bonds walking outwards from sites `left` and `right` until a
  // safe site or the edge of the node is reached.
  void grow(Level& lv, Index left, Index right) const {
    const Node& node = lv.node;
    for (Index steps = 0; steps < n_ && !safe(lv, left) && node.has_bond(wrap(left - 1)); ++steps) {
      left = wrap(left - 1);
      lv.wanted.push_back(left);
    }
    for (Index steps = 0; steps < n_ && !safe(lv, right) && node.has_bond(right); ++steps) {
      lv.wanted.push_back(right);
      right = wrap(right + 1);
    }
  }

  void assign(Level& lv) {
    const Node& node = lv.node;
    auto& wanted = lv.wanted;
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());
    lv.split.keep.clear();
    lv.split.w1.clear();
    for (const Index b : wanted) {
      const std::size_t k = node.bond_pos(b);
      lv.split.keep.push_back(k);
      lv.split.w1.push_back(bridge(node, k));
    }
  }

  // Live rule: split while a site fed only by the node's own bonds would turn negative.
  bool choose(Level& lv, int depth) {
    const Node& node = lv.node;
    if (depth >= process_.options().max_refine_depth) return false;
    const double mid = node.a + 0.5 * (node.b - node.a);
    if (!(mid > node.a && mid < node.b)) return false;
    lv.wanted.clear();
    for (std::size_t i = 0; i < lv.trial.size(); ++i) {
      if (!(lv.trial[i] < 0.0)) continue;
      const Index s = node.sites[i];
      for (const Index b : {wrap(s - 1), s})
        if (node.has_bond(b)) lv.wanted.push_back(b);
      grow(lv, wrap(s - 1), wrap(s + 1));
    }
    if (lv.wanted.empty()) return false;
    assign(lv);
    return true;
  }

  void extend(Level& lv, Index bond) {
    const Node& node = lv.node;
    lv.wanted.clear();
    for (const std::size_t k : lv.split.keep) lv.wanted.push_back(node.bonds[k]);
    lv.wanted.push_back(bond);
    grow(lv, bond, right_of(bond));
    assign(lv);
  }

  double bridge(const Node& node, std::size_t k) {
    const double h = node.b - node.a;
    const double mid = node.a + 0.5 * h;
    if (const double* hit = ws_.cache.find(node.bonds[k], mid)) return *hit;
    double w1 = 0.5 * node.w[k];
    if (process_.options().noise) w1 += std::sqrt(0.25 * h) * rng_->normal();
    ws_.cache.insert(node.bonds[k], mid, w1);
    return w1;
  }

  bool read_split(Level& lv) {
    const Node& node = lv.node;
    const double mid = node.a + 0.5 * (node.b - node.a);
    const auto& records = replay_->records;
    lv.split.keep.clear();
    lv.split.w1.clear();
    std::size_t k = 0;
    while (cursor < records.size() && is_split(records[cursor]) && records[cursor].t == mid) {
      const NoiseRecord& r = records[cursor];
      const auto bond = static_cast<Index>(r.bond & ~kLogSplitFlag);
      while (k < node.bonds.size() && node.bonds[k] < bond) ++k;
      if (k == node.bonds.size() || node.bonds[k] != bond)
        throw ValidationError("noise log refines a bond outside its step");
      lv.split.keep.push_back(k);
      lv.split.w1.push_back(r.value);
      ++cursor;
      ++k;
    }
    return !lv.split.keep.empty();
  }

  void emit_split(const Level& lv) {
    const Node& node = lv.node;
    const double mid = node.a + 0.5 * (node.b - node.a);
    for (std::size_t c = 0; c < lv.split.keep.size(); ++c) {
      const Index bond = node.bonds[lv.split.keep[c]];
      if (log_) log_->records.push_back({static_cast<std::uint32_t>(bond) | kLogSplitFlag, mid, lv.split.w1[c]});
      push({Event::Noise, bond, node.a, mid, lv.split.w1[c], 0.0, 0.0});
    }
  }

  const BondDiffusion& process_;
  Vector& z_;
  Index n_;
  StepStats& stats_;
  DiffusionObserver* observer_;
  RandomStream* rng_;
  BondNoiseLog* log_;
  const BondNoiseLog* replay_;
  Workspace& ws_;
  int open_marks_ = 0;
};

}  // namespace

void BondDiffusion::advance(Vector& z, double t0, double t1, Vector w, RandomStream& rng, BondNoiseLog* log,
                            StepStats& stats, DiffusionObserver* observer) const {
  if (!(t1 > t0)) throw ValidationError("diffusion step needs t1 > t0");
  if (w.size() != z.size()) throw ValidationError("one increment per bond is required");
  if (tilt_ && !tilt_->covers(t0, t1)) throw ValidationError("tilt field does not cover the step interval");
  if (!options_.noise) w.setZero();
  if (log) open_log(*log, BondNoiseLog::Kind::Diffusion, static_cast<std::size_t>(z.size()), t0);
  Engine(*this, z, stats, observer, &rng, log, nullptr).step(t0, t1, w);
  if (log) close_log(*log, t1);
}

void replay_diffusion(const BondDiffusion& process, Vector& z, const BondNoiseLog& log, DiffusionObserver* observer,
                      StepStats* stats) {
  if (log.kind != BondNoiseLog::Kind::Diffusion) throw ValidationError("not a diffusion noise log");
  if (!log.closed()) throw ValidationError("noise log is not closed");
  const Index n = z.size();
  if (log.n_sites != static_cast<std::size_t>(n)) throw ValidationError("noise log size does not match the state");
  StepStats local;
  Engine engine(process, z, stats ? *stats : local, observer, nullptr, nullptr, &log);
  const std::size_t end = log.records.size() - 1;
  Vector w(n);
  while (engine.cursor < end) {
    const std::size_t start = engine.cursor;
    if (start + static_cast<std::size_t>(n) > end) throw ValidationError("noise log is truncated");
    const double t0 = log.records[start].t;
    for (Index j = 0; j < n; ++j) {
      const NoiseRecord& r = log.records[start + static_cast<std::size_t>(j)];
      if (r.bond != static_cast<std::uint32_t>(j) || r.t != t0) throw ValidationError("noise log records are out of order");
      w[j] = r.value;
    }
    std::size_t next = start + static_cast<std::size_t>(n);
    while (next < end && is_split(log.records[next])) ++next;
    const double t1 = log.records[next].t;
    if (!(t1 > t0)) throw ValidationError("noise log steps are not increasing in time");
    engine.cursor = start + static_cast<std::size_t>(n);
    engine.step(t0, t1, w);
    if (engine.cursor != next) throw ValidationError("noise log refinement records do not match their step");
  }
}

namespace {

EnergyState step_with(const BondDiffusion& process, const EnergyState& state, double dt, RandomStream& rng,
                      BondNoiseLog* log, StepStats* stats) {
  Vector z = state.energies();
  const double bound = process.stable_dt(z, state.time());
  if (!(dt > 0.0)) throw ValidationError("time step must be positive");
  if (dt > bound * (1.0 + 1e-12))
    throw ValidationError("time step " + std::to_string(dt) + " exceeds the stability bound " + std::to_string(bound));
  const double t1 = state.time() + dt;
  Vector w(z.size());
  const double sd = std::sqrt(t1 - state.time());
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = sd * rng.normal();
  StepStats local;
  process.advance(z, state.time(), t1, std::move(w), rng, log, stats ? *stats : local);
  return EnergyState(std::move(z), t1);
}

}  // namespace

EnergyState step_bep(const EnergyState& state, double m, double dt, RandomStream& rng, BondNoiseLog* log,
                     const StepOptions& options, StepStats* stats) {
  return step_with(BondDiffusion(ModelSpec::bep(m), nullptr, options), state, dt, rng, log, stats);
}

EnergyState step_gbep(const EnergyState& state, const RateFunction& a, double dt, RandomStream& rng,
                      BondNoiseLog* log, const StepOptions& options, StepStats* stats) {
  return step_with(BondDiffusion(ModelSpec::gbep(a), nullptr, options), state, dt, rng, log, stats);
}

EnergyState step_wabep(const EnergyState& state, double m, const TiltField& tilt, double dt, RandomStream& rng,
                       BondNoiseLog* log, const StepOptions& options, StepStats* stats) {
  return step_with(BondDiffusion(ModelSpec::bep(m), &tilt, options), state, dt, rng, log, stats);
}

}  // namespace heatlab
