#pragma once

// Observation/illumination directions on the unit sphere and multistatic
// far-field datasets.

#include "fracsense/kernels.hpp"
#include "fracsense/quadrature.hpp"

#include <array>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fracsense {

/// Product grid: Gauss-Legendre nodes in cos(theta) times uniform phi.
/// Direction index is it * n_phi + ip.
class ObservationGrid {
 public:
  ObservationGrid() = default;
  ObservationGrid(int n_theta, int n_phi) : n_theta_(n_theta), n_phi_(n_phi) {
    if (n_theta < 1 || n_phi < 1) throw std::invalid_argument("ObservationGrid: empty grid");
    const auto& g = gauss_legendre(n_theta);
    for (int it = 0; it < n_theta; ++it)
      for (int ip = 0; ip < n_phi; ++ip) {
        const double th = std::acos(-g.x[it]);
        const double ph = 2.0 * kPi * ip / n_phi;
        theta_.push_back(th);
        phi_.push_back(ph);
        weights_.push_back(g.w[it] * 2.0 * kPi / n_phi);
      }
  }

  int n_theta() const { return n_theta_; }
  int n_phi() const { return n_phi_; }
  int size() const { return static_cast<int>(weights_.size()); }
  double theta(int k) const { return theta_[k]; }
  double phi(int k) const { return phi_[k]; }
  double weight(int k) const { return weights_[k]; }
  const std::vector<double>& weights() const { return weights_; }

  Vec3 direction(int k) const { return spherical(theta_[k], phi_[k]); }
  /// Unit vectors (xi_hat, theta_hat, phi_hat).
  std::array<Vec3, 3> frame(int k) const {
    const double th = theta_[k], ph = phi_[k];
    return {spherical(th, ph),
            Vec3(std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th)),
            Vec3(-std::sin(ph), std::cos(ph), 0.0)};
  }
  std::vector<Vec3> directions() const {
    std::vector<Vec3> d;
    for (int k = 0; k < size(); ++k) d.push_back(direction(k));
    return d;
  }

  void scale_weights(double c) {
    for (auto& w : weights_) w *= c;
  }

  static Vec3 spherical(double th, double ph) {
    return {std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th)};
  }

 private:
  int n_theta_ = 0, n_phi_ = 0;
  std::vector<double> theta_, phi_, weights_;
};

/// Far fields of several incident waves, all sampled on one grid.
struct FarFieldDataset {
  int n_theta = 0, n_phi = 0;
  double omega = 0.0;
  std::vector<IncidentPlaneWave> incidents;
  std::vector<std::vector<FarFieldSample>> records;  ///< [incident][direction]

  int num_incidents() const { return static_cast<int>(records.size()); }
  int num_directions() const { return n_theta * n_phi; }

  bool operator==(const FarFieldDataset& o) const {
    if (n_theta != o.n_theta || n_phi != o.n_phi || omega != o.omega ||
        records.size() != o.records.size() || incidents.size() != o.incidents.size())
      return false;
    for (std::size_t p = 0; p < incidents.size(); ++p)
      if (incidents[p].d != o.incidents[p].d || incidents[p].q_p != o.incidents[p].q_p ||
          incidents[p].q_s != o.incidents[p].q_s)
        return false;
    for (std::size_t p = 0; p < records.size(); ++p) {
      if (records[p].size() != o.records[p].size()) return false;
      for (std::size_t k = 0; k < records[p].size(); ++k)
        if (records[p][k].up_inf != o.records[p][k].up_inf ||
            records[p][k].us_inf != o.records[p][k].us_inf ||
            records[p][k].xi_hat != o.records[p][k].xi_hat)
          return false;
    }
    return true;
  }
};

/// Intrinsic amplitudes (radial P, theta-S, phi-S) per direction, each
/// scaled by the square root of the direction's quadrature weight.
inline CVector intrinsic_vector(const std::vector<FarFieldSample>& rec, const ObservationGrid& grid) {
  if (static_cast<int>(rec.size()) != grid.size())
    throw std::invalid_argument("intrinsic_vector: record/grid size mismatch");
  CVector v(3 * grid.size());
  for (int k = 0; k < grid.size(); ++k) {
    const auto f = grid.frame(k);
    const double sw = std::sqrt(grid.weight(k));
    v[3 * k] = sw * to_complex(f[0]).dot(rec[k].up_inf);
    v[3 * k + 1] = sw * to_complex(f[1]).dot(rec[k].us_inf);
    v[3 * k + 2] = sw * to_complex(f[2]).dot(rec[k].us_inf);
  }
  return v;
}

/// Energy-flux scales sqrt(k_b / M_b) of the (P, S, S) intrinsic amplitudes.
inline std::array<double, 3> intrinsic_energy_scale(const ElasticMedium& med, double omega) {
  const double sp = std::sqrt(med.k_p(omega) / med.p_modulus()), ss = std::sqrt(med.k_s(omega) / med.mu);
  return {sp, ss, ss};
}

/// Intrinsic vector with every amplitude scaled by its energy-flux factor,
/// so that the squared norm is the radiated power. Layout shared by all
/// inversion stages.
inline CVector farfield_vector(const std::vector<FarFieldSample>& rec, const ObservationGrid& grid,
                               const ElasticMedium& med, double omega) {
  CVector v = intrinsic_vector(rec, grid);
  const auto s = intrinsic_energy_scale(med, omega);
  for (int k = 0; k < grid.size(); ++k)
    for (int c = 0; c < 3; ++c) v[3 * k + c] *= s[c];
  return v;
}

/// Complex Gaussian noise that is white in the farfield_vector coordinates:
/// each record receives a perturbation whose expected norm there is level
/// times the record's norm.
inline FarFieldDataset add_noise(const FarFieldDataset& data, double level, std::uint64_t seed,
                                 const ElasticMedium& med) {
  if (!(level >= 0.0)) throw std::invalid_argument("add_noise: level must be non-negative");
  FarFieldDataset out = data;
  if (level == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  const ObservationGrid grid(data.n_theta, data.n_phi);
  const auto s = intrinsic_energy_scale(med, data.omega);
  for (auto& rec : out.records) {
    const double sigma = level * farfield_vector(rec, grid, med, data.omega).norm() / std::sqrt(3.0 * rec.size());
    for (std::size_t k = 0; k < rec.size(); ++k) {
      const auto f = grid.frame(static_cast<int>(k));
      const double sw = std::sqrt(grid.weight(static_cast<int>(k)));
      const cd np(gauss(rng), gauss(rng)), n1(gauss(rng), gauss(rng)), n2(gauss(rng), gauss(rng));
      rec[k].up_inf += sigma / (sw * s[0]) * np * to_complex(f[0]);
      rec[k].us_inf += sigma / (sw * s[1]) * (n1 * to_complex(f[1]) + n2 * to_complex(f[2]));
    }
  }
  return out;
}

// File format:
//   farfield <n_theta> <n_phi> <omega> <n_incident>
//   incident <p> d1 d2 d3 qp1 qp2 qp3 qs1 qs2 qs3      (n_incident lines)
//   <p> <k> theta phi Re(up1) Im(up1) .. Re(up3) Im(up3) Re(us1) Im(us1) .. Im(us3)
inline void write_dataset(std::ostream& os, const FarFieldDataset& d) {
  const ObservationGrid grid(d.n_theta, d.n_phi);
  os << std::setprecision(17);
  os << "farfield " << d.n_theta << ' ' << d.n_phi << ' ' << d.omega << ' ' << d.num_incidents() << '\n';
  for (int p = 0; p < d.num_incidents(); ++p) {
    const auto& w = d.incidents[p];
    os << "incident " << p << ' ' << w.d.transpose() << ' ' << w.q_p.transpose() << ' '
       << w.q_s.transpose() << '\n';
  }
  for (int p = 0; p < d.num_incidents(); ++p)
    for (int k = 0; k < grid.size(); ++k) {
      const auto& s = d.records[p][k];
      os << p << ' ' << k << ' ' << grid.theta(k) << ' ' << grid.phi(k);
      for (int i = 0; i < 3; ++i) os << ' ' << s.up_inf[i].real() << ' ' << s.up_inf[i].imag();
      for (int i = 0; i < 3; ++i) os << ' ' << s.us_inf[i].real() << ' ' << s.us_inf[i].imag();
      os << '\n';
    }
}

inline FarFieldDataset read_dataset(std::istream& is) {
  FarFieldDataset d;
  std::string tag;
  int np = 0;
  is >> tag >> d.n_theta >> d.n_phi >> d.omega >> np;
  if (!is || tag != "farfield" || d.n_theta < 1 || d.n_phi < 1 || np < 0)
    throw std::invalid_argument("dataset file: malformed header");
  const ObservationGrid grid(d.n_theta, d.n_phi);
  d.incidents.resize(np);
  for (int p = 0; p < np; ++p) {
    int idx = -1;
    auto& w = d.incidents[p];
    is >> tag >> idx >> w.d[0] >> w.d[1] >> w.d[2] >> w.q_p[0] >> w.q_p[1] >> w.q_p[2] >>
        w.q_s[0] >> w.q_s[1] >> w.q_s[2];
    w.omega = d.omega;
    if (!is || tag != "incident" || idx != p)
      throw std::invalid_argument("dataset file: bad incident line " + std::to_string(p));
  }
  d.records.assign(np, std::vector<FarFieldSample>(grid.size()));
  for (int line = 0; line < np * grid.size(); ++line) {
    int p = -1, k = -1;
    double th, ph;
    is >> p >> k >> th >> ph;
    if (!is || p < 0 || p >= np || k < 0 || k >= grid.size())
      throw std::invalid_argument("dataset file: bad record " + std::to_string(line));
    auto& s = d.records[p][k];
    s.xi_hat = grid.direction(k);
    double re, im;
    for (int i = 0; i < 3; ++i) {
      is >> re >> im;
      s.up_inf[i] = cd(re, im);
    }
    for (int i = 0; i < 3; ++i) {
      is >> re >> im;
      s.us_inf[i] = cd(re, im);
    }
    if (!is) throw std::invalid_argument("dataset file: truncated record " + std::to_string(line));
  }
  return d;
}

inline void save_dataset(const std::string& path, const FarFieldDataset& d) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  write_dataset(os, d);
}

inline FarFieldDataset load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path);
  return read_dataset(is);
}

}  // namespace fracsense
