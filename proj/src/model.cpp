#include "wip/model.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <utility>

#include "wip/errors.hpp"
#include "wip/keyvalue.hpp"

namespace wip {
namespace {

// Field table shared by the parser, the writer and validate().
template<typename Fn>
void for_each_field(WipParams & p, Fn && fn)
{
  fn("m_b", p.m_b);
  fn("b", p.b);
  fn("grav", p.grav);
  fn("m_w", p.m_w);
  fn("r_w", p.r_w);
  fn("d_w", p.d_w);
  fn("I_Bxx", p.I_Bxx);
  fn("I_Byy", p.I_Byy);
  fn("I_Bzz", p.I_Bzz);
  fn("I_Wyy", p.I_Wyy);
  fn("I_Wzz", p.I_Wzz);
}

}  // namespace

void WipParams::validate() const
{
  auto copy = *this;
  for_each_field(copy, [](const char * name, double value) {
    if (!std::isfinite(value) || value <= 0.0) {
      throw ParseError(std::string("parameter '") + name + "' must be finite and positive", name);
    }
  });
}

WipParams parse_params(const std::string & text)
{
  const auto doc = parse_key_value(text);
  WipParams p;
  for_each_field(p, [&](const char * name, double & value) { value = doc.top().number(name); });
  p.validate();
  return p;
}

WipParams load_params(const std::filesystem::path & file) { return parse_params(read_text_file(file)); }

std::string format_params(const WipParams & p)
{
  std::ostringstream out;
  out << std::setprecision(17);
  auto copy = p;
  for_each_field(copy, [&](const char * name, double value) { out << name << " = " << value << '\n'; });
  return out.str();
}

ModelCoefficients coefficients_from_params(const WipParams & p)
{
  ModelCoefficients c;
  c.c_aa = p.I_Byy + p.m_b * p.b * p.b;
  c.c_ax = p.m_b * p.b;
  c.c_x = p.m_b + 2.0 * p.m_w;
  c.c_p = p.I_Wyy;
  return c;
}

double i_theta(double alpha, const WipParams & p)
{
  const double c = std::cos(alpha), s = std::sin(alpha);
  return 2.0 * p.I_Wzz + p.I_Bzz * c * c + 2.0 * p.m_w * p.d_w * p.d_w + (p.I_Bxx + p.m_b * p.b * p.b) * s * s;
}

double d_i_theta(double alpha, const WipParams & p)
{
  return (p.I_Bxx + p.m_b * p.b * p.b - p.I_Bzz) * std::sin(2.0 * alpha);
}

WipModel::WipModel(const WipParams & p) : params_(p), coeffs_(coefficients_from_params(p)) {}

// H = r^2 (c_x + I_theta / d^2), K = r^2 (c_x - I_theta / d^2): the yaw block
// carries the full yaw inertia I_theta so that coriolis() is exactly the tilt
// derivative of the kinetic energy 1/2 v^T M v.
Eigen::Matrix3d WipModel::mass_matrix(double alpha) const
{
  const auto & p = params_;
  const double r2 = p.r_w * p.r_w;
  const double yaw = i_theta(alpha, p) / (p.d_w * p.d_w);
  const double h = r2 * (coeffs_.c_x + yaw);
  const double k = r2 * (coeffs_.c_x - yaw);
  const double off = coeffs_.c_ax * p.r_w * std::cos(alpha);
  Eigen::Matrix3d m;
  m << coeffs_.c_aa, off, off,
       off, h + coeffs_.c_p, k,
       off, k, h + coeffs_.c_p;
  return m;
}

Eigen::Matrix3d WipModel::d_mass_d_alpha(double alpha) const
{
  const auto & p = params_;
  const double dyaw = p.r_w * p.r_w * d_i_theta(alpha, p) / (p.d_w * p.d_w);
  const double doff = -coeffs_.c_ax * p.r_w * std::sin(alpha);
  Eigen::Matrix3d m;
  m << 0.0, doff, doff,
       doff, dyaw, -dyaw,
       doff, -dyaw, dyaw;
  return m;
}

Eigen::Vector3d WipModel::coriolis(double alpha, const BaseVelocity & v) const
{
  const auto & p = params_;
  const double inertia_gap = p.I_Bxx - p.I_Bzz + p.m_b * p.b * p.b;
  const double turn = v[1] - v[2];
  const double yaw = p.r_w * p.r_w / (2.0 * p.d_w * p.d_w) * inertia_gap * std::sin(2.0 * alpha) * turn * turn;
  const double coupling = -coeffs_.c_ax * p.r_w * std::sin(alpha) * v[0] * (v[2] + v[1]);
  const double gravity = coeffs_.c_ax * p.grav * std::sin(alpha);
  return {yaw + coupling + gravity, 0.0, 0.0};
}

Eigen::Vector3d WipModel::d_coriolis_d_alpha(double alpha, const BaseVelocity & v) const
{
  const auto & p = params_;
  const double inertia_gap = p.I_Bxx - p.I_Bzz + p.m_b * p.b * p.b;
  const double turn = v[1] - v[2];
  const double yaw = p.r_w * p.r_w / (p.d_w * p.d_w) * inertia_gap * std::cos(2.0 * alpha) * turn * turn;
  const double coupling = -coeffs_.c_ax * p.r_w * std::cos(alpha) * v[0] * (v[2] + v[1]);
  const double gravity = coeffs_.c_ax * p.grav * std::cos(alpha);
  return {yaw + coupling + gravity, 0.0, 0.0};
}

Eigen::Matrix3d WipModel::d_coriolis_d_v(double alpha, const BaseVelocity & v) const
{
  const auto & p = params_;
  const double inertia_gap = p.I_Bxx - p.I_Bzz + p.m_b * p.b * p.b;
  const double ky = p.r_w * p.r_w / (2.0 * p.d_w * p.d_w) * inertia_gap * std::sin(2.0 * alpha);
  const double cr = coeffs_.c_ax * p.r_w * std::sin(alpha);
  const double turn = v[1] - v[2];
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  m(0, 0) = -cr * (v[1] + v[2]);
  m(0, 1) = 2.0 * ky * turn - cr * v[0];
  m(0, 2) = -2.0 * ky * turn - cr * v[0];
  return m;
}

Eigen::Matrix3d WipModel::connection() const
{
  const double r = params_.r_w, rd = params_.r_w / params_.d_w;
  Eigen::Matrix3d a;
  a << 0.0, -r, -r,
       0.0, 0.0, 0.0,
       0.0, rd, -rd;
  return a;
}

double WipModel::reduced_lagrangian(const BaseState & s, const BaseVelocity & v, const AlgebraElement & xi) const
{
  return total_energy(s, v, xi) - 2.0 * coeffs_.c_ax * params_.grav * std::cos(s[0]);
}

double WipModel::total_energy(const BaseState & s, const BaseVelocity & v, const AlgebraElement & xi) const
{
  const auto & c = coeffs_;
  const double alpha = s[0];
  const double kinetic = 0.5 * c.c_x * (xi[0] * xi[0] + xi[1] * xi[1])
    + 0.5 * i_theta(alpha, params_) * xi[2] * xi[2]
    + 0.5 * c.c_aa * v[0] * v[0]
    + 0.5 * c.c_p * (v[1] * v[1] + v[2] * v[2])
    + c.c_ax * std::sin(alpha) * xi[1] * xi[2]
    + c.c_ax * std::cos(alpha) * xi[0] * v[0];
  return kinetic + c.c_ax * params_.grav * std::cos(alpha);
}

CoAlgebraElement WipModel::body_momentum(const BaseState & s, const BaseVelocity & v, const AlgebraElement & xi) const
{
  const auto & c = coeffs_;
  const double ca = std::cos(s[0]), sa = std::sin(s[0]);
  return {c.c_x * xi[0] + c.c_ax * ca * v[0],
          c.c_x * xi[1] + c.c_ax * sa * xi[2],
          i_theta(s[0], params_) * xi[2] + c.c_ax * sa * xi[1]};
}

double WipModel::lagrangian(const Eigen::Matrix<double, 6, 1> & q, const Eigen::Matrix<double, 6, 1> & qdot) const
{
  const auto & c = coeffs_;
  const double th = q[2], alpha = q[3];
  const double vx = qdot[0], vy = qdot[1], vth = qdot[2], va = qdot[3];
  const double ca = std::cos(alpha), sa = std::sin(alpha), ct = std::cos(th), st = std::sin(th);
  return 0.5 * c.c_x * (vx * vx + vy * vy)
    + 0.5 * i_theta(alpha, params_) * vth * vth
    + 0.5 * c.c_aa * va * va
    + 0.5 * c.c_p * (qdot[4] * qdot[4] + qdot[5] * qdot[5])
    + c.c_ax * (ca * ct * va * vx - sa * st * vx * vth)
    + c.c_ax * (sa * ct * vth * vy + ca * st * va * vy - params_.grav * ca);
}

}  // namespace wip
