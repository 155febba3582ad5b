#include "metafap/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace metafap {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kClosureTol = 1e-9;

double deg2rad(double deg) { return deg * (kPi / 180.0); }

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

bool in_range(double v, double lo, double hi) {
  return std::isfinite(v) && v >= lo && v <= hi;
}
}  // namespace

std::string to_string(Polarization pol) {
  return pol == Polarization::TE ? "TE" : "TM";
}

Polarization polarization_from_string(const std::string& s) {
  if (s == "TE") return Polarization::TE;
  if (s == "TM") return Polarization::TM;
  throw std::invalid_argument("unknown polarization '" + s +
                              "' (expected TE or TM)");
}

void DesignVector::validate() const {
  using namespace domain;
  const bool freq_ok = in_range(freq_ghz, kFreqLo1, kFreqHi1) ||
                       in_range(freq_ghz, kFreqLo2, kFreqHi2);
  require(freq_ok, "freq_ghz=" + std::to_string(freq_ghz) +
                       " outside [5,11] u [15,25]");
  require(in_range(theta_deg, kThetaLo, kThetaHi),
          "theta_deg=" + std::to_string(theta_deg) + " outside [0,89]");
  require(in_range(spacing_lambda, kSpacingLo, kSpacingHi),
          "spacing_lambda=" + std::to_string(spacing_lambda) +
              " outside [0.25,0.5]");
  require(in_range(cvt_ff, kCvtLo, kCvtHi),
          "cvt_ff=" + std::to_string(cvt_ff) + " outside [50,353]");
  require(in_range(cvb_pf, kCvbLo, kCvbHi),
          "cvb_pf=" + std::to_string(cvb_pf) + " outside [0.64,8.86]");
  require(in_range(rv_ohm, kRvLo, kRvHi),
          "rv_ohm=" + std::to_string(rv_ohm) + " outside [0.8,50]");
  require(in_range(lv_ph, kLvLo, kLvHi),
          "lv_ph=" + std::to_string(lv_ph) + " outside [750,850]");
  require(array_n >= kArrayLo && array_n <= kArrayHi,
          "array_n=" + std::to_string(array_n) + " outside {2..6}");
}

DesignVector make_design_vector(double freq_ghz, double theta_deg,
                                double spacing_lambda, double cvt_ff,
                                double cvb_pf, double rv_ohm, double lv_ph,
                                int array_n) {
  DesignVector d{freq_ghz, theta_deg, spacing_lambda, cvt_ff,
                 cvb_pf,   rv_ohm,    lv_ph,          array_n};
  d.validate();
  return d;
}

void ResponseTriple::validate(double closure_tol) const {
  require(in_range(transmittance, 0.0, 1.0),
          "transmittance outside [0,1]: " + std::to_string(transmittance));
  require(in_range(reflectance, 0.0, 1.0),
          "reflectance outside [0,1]: " + std::to_string(reflectance));
  require(in_range(absorbance, 0.0, 1.0),
          "absorbance outside [0,1]: " + std::to_string(absorbance));
  const double sum = transmittance + reflectance + absorbance;
  require(std::fabs(sum - 1.0) <= closure_tol,
          "response does not sum to 1: " + std::to_string(sum));
}

void OracleConfig::validate() const {
  require(std::isfinite(wavelength_mm) && wavelength_mm > 0.0,
          "wavelength_mm must be > 0");
  require(std::isfinite(substrate_er) && substrate_er >= 1.0,
          "substrate_er must be >= 1");
  require(std::isfinite(substrate_tand) && substrate_tand >= 0.0,
          "substrate_tand must be >= 0");
  require(std::isfinite(substrate_thickness_mm) && substrate_thickness_mm > 0.0,
          "substrate_thickness_mm must be > 0");
  require(std::isfinite(bottom_l_ph) && bottom_l_ph > 0.0,
          "bottom_l_ph must be > 0");
  require(std::isfinite(bottom_r_ohm) && bottom_r_ohm >= 0.0,
          "bottom_r_ohm must be >= 0");
  require(std::isfinite(coupling_kappa_spacing),
          "coupling_kappa_spacing must be finite");
  require(std::isfinite(coupling_kappa_array),
          "coupling_kappa_array must be finite");
}

std::complex<double> series_rlc_impedance(double r_ohm, double l_h, double c_f,
                                          double f_hz) {
  require(std::isfinite(f_hz) && f_hz > 0.0, "series_rlc: f must be > 0");
  require(std::isfinite(c_f) && c_f > 0.0, "series_rlc: c must be > 0");
  require(std::isfinite(l_h) && l_h >= 0.0, "series_rlc: l must be >= 0");
  require(std::isfinite(r_ohm) && r_ohm >= 0.0, "series_rlc: r must be >= 0");
  const double omega = 2.0 * kPi * f_hz;
  return {r_ohm, omega * l_h - 1.0 / (omega * c_f)};
}

double wave_impedance(double theta_deg, Polarization pol) {
  require(in_range(theta_deg, domain::kThetaLo, domain::kThetaHi),
          "wave_impedance: theta_deg outside [0,89]");
  const double c = std::cos(deg2rad(theta_deg));
  return pol == Polarization::TE ? kEta0Ohm / c : kEta0Ohm * c;
}

AbcdMatrix abcd_mul(const AbcdMatrix& m1, const AbcdMatrix& m2) {
  return {m1.a * m2.a + m1.b * m2.c, m1.a * m2.b + m1.b * m2.d,
          m1.c * m2.a + m1.d * m2.c, m1.c * m2.b + m1.d * m2.d};
}

std::complex<double> abcd_det(const AbcdMatrix& m) {
  return m.a * m.d - m.b * m.c;
}

AbcdMatrix abcd_shunt(std::complex<double> y) {
  return {{1.0, 0.0}, {0.0, 0.0}, y, {1.0, 0.0}};
}

AbcdMatrix abcd_line(double thickness_mm, double er, double tand, double f_hz,
                     double theta_deg) {
  require(std::isfinite(thickness_mm) && thickness_mm >= 0.0,
          "abcd_line: thickness must be >= 0");
  require(std::isfinite(er) && er >= 1.0, "abcd_line: er must be >= 1");
  require(std::isfinite(tand) && tand >= 0.0, "abcd_line: tand must be >= 0");
  require(std::isfinite(f_hz) && f_hz > 0.0, "abcd_line: f must be > 0");
  require(in_range(theta_deg, domain::kThetaLo, domain::kThetaHi),
          "abcd_line: theta_deg outside [0,89]");
  using cd = std::complex<double>;
  const double omega = 2.0 * kPi * f_hz;
  const cd eps_c(er, -er * tand);
  const cd n = std::sqrt(eps_c);
  const cd sin_t = std::sin(deg2rad(theta_deg)) / n;
  const cd cos_t = std::sqrt(cd(1.0, 0.0) - sin_t * sin_t);
  const cd gamma = cd(0.0, 1.0) * (omega / kC0) * n * cos_t;
  const cd zc = kEta0Ohm / n;
  const cd gl = gamma * (thickness_mm * 1e-3);
  const cd ch = std::cosh(gl);
  const cd sh = std::sinh(gl);
  return {ch, zc * sh, sh / zc, ch};
}

SParams abcd_to_sparams(const AbcdMatrix& m, double z0) {
  require(std::isfinite(z0) && z0 > 0.0, "abcd_to_sparams: z0 must be > 0");
  const std::complex<double> den = m.a + m.b / z0 + m.c * z0 + m.d;
  if (!(std::abs(den) > 0.0) || !std::isfinite(std::abs(den))) {
    throw std::runtime_error("abcd_to_sparams: singular network");
  }
  return {(m.a + m.b / z0 - m.c * z0 - m.d) / den, 2.0 / den};
}

double effective_top_capacitance_f(const DesignVector& d,
                                   const OracleConfig& cfg) {
  const double spacing_factor =
      1.0 + cfg.coupling_kappa_spacing * (0.5 - d.spacing_lambda);
  const double array_factor =
      1.0 + cfg.coupling_kappa_array / static_cast<double>(d.array_n);
  const double c_eff = d.cvt_ff * 1e-15 * spacing_factor * array_factor;
  if (!(c_eff > 0.0)) {
    throw std::runtime_error("effective top capacitance is not positive");
  }
  return c_eff;
}

AbcdMatrix unit_cell_abcd(const DesignVector& d, const OracleConfig& cfg) {
  const double f_hz = d.freq_ghz * 1e9;
  const double rv = cfg.lossless_override ? 0.0 : d.rv_ohm;
  const double bottom_r = cfg.lossless_override ? 0.0 : cfg.bottom_r_ohm;
  const double tand = cfg.lossless_override ? 0.0 : cfg.substrate_tand;

  const std::complex<double> z_top = series_rlc_impedance(
      rv, d.lv_ph * 1e-12, effective_top_capacitance_f(d, cfg), f_hz);
  const std::complex<double> z_bot = series_rlc_impedance(
      bottom_r, cfg.bottom_l_ph * 1e-12, d.cvb_pf * 1e-12, f_hz);
  const AbcdMatrix line =
      abcd_line(cfg.substrate_thickness_mm, cfg.substrate_er, tand, f_hz,
                d.theta_deg);
  return abcd_mul(abcd_mul(abcd_shunt(1.0 / z_top), line),
                  abcd_shunt(1.0 / z_bot));
}

ResponseTriple unit_cell_response(const DesignVector& d,
                                  const OracleConfig& cfg) {
  const AbcdMatrix m = unit_cell_abcd(d, cfg);
  const double z0 = wave_impedance(d.theta_deg, cfg.polarization);
  const SParams s = abcd_to_sparams(m, z0);
  double refl = std::norm(s.s11);
  double tran = std::norm(s.s21);
  if (!std::isfinite(refl) || !std::isfinite(tran)) {
    throw std::runtime_error("unit_cell_response: non-finite S-parameters");
  }

  double sum = tran + refl;
  if (sum > 1.0) {
    const double excess = sum - 1.0;
    if (!(excess < kClosureTol)) {
      throw std::runtime_error("unit_cell_response: passivity violated by " +
                               std::to_string(excess));
    }
    const double scale = 1.0 / sum;
    tran *= scale;
    refl *= scale;
    while (tran + refl > 1.0) refl = std::nextafter(refl, 0.0);
    sum = tran + refl;
  }
  double absb = 1.0 - sum;
  // Nudge so that tran + refl + absb evaluates to exactly 1.
  while (sum + absb > 1.0) absb = std::nextafter(absb, -1.0);
  while (sum + absb < 1.0) absb = std::nextafter(absb, 2.0);
  return {tran, refl, absb};
}

}  // namespace metafap
