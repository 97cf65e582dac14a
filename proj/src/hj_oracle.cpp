#include <cmath>
#include <limits>
#include <stdexcept>

#include "brs/validate.hpp"

namespace brs {

bool HjResult::cell_inside(int ix, int iy) const {
  if (ix < 0 || ix >= nx || iy < 0 || iy >= ny) return false;
  return inside[static_cast<size_t>(iy) * nx + ix] != 0;
}

bool HjResult::contains(double x, double y, int dilate_cells) const {
  const double hx = (xmax - xmin) / (nx - 1), hy = (ymax - ymin) / (ny - 1);
  const int ix = static_cast<int>(std::lround((x - xmin) / hx));
  const int iy = static_cast<int>(std::lround((y - ymin) / hy));
  for (int dy = -dilate_cells; dy <= dilate_cells; ++dy)
    for (int dx = -dilate_cells; dx <= dilate_cells; ++dx)
      if (cell_inside(ix + dx, iy + dy)) return true;
  return false;
}

HjResult HjResult::eroded(int cells) const {
  HjResult out = *this;
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      bool keep = true;
      for (int dy = -cells; dy <= cells && keep; ++dy)
        for (int dx = -cells; dx <= cells && keep; ++dx)
          if (!cell_inside(ix + dx, iy + dy)) keep = false;
      out.inside[static_cast<size_t>(iy) * nx + ix] = keep ? 1 : 0;
    }
  return out;
}

HjResult grid_hj_oracle(const Dyn2& dyn, const std::vector<double>& controls,
                        const std::vector<double>& deltas, const Polynomial& px,
                        const std::vector<std::string>& state_names, double T, double xmin,
                        double xmax, double ymin, double ymax, int nx, int ny, double cfl) {
  if (nx < 2 || ny < 2) throw std::invalid_argument("grid_hj_oracle: need at least a 2x2 grid");
  if (controls.empty() || deltas.empty())
    throw std::invalid_argument("grid_hj_oracle: control and delta samples required");
  if (cfl <= 0.0 || cfl > 1.0) throw std::invalid_argument("grid_hj_oracle: CFL violation");

  HjResult res;
  res.nx = nx;
  res.ny = ny;
  res.xmin = xmin;
  res.xmax = xmax;
  res.ymin = ymin;
  res.ymax = ymax;
  const double hx = (xmax - xmin) / (nx - 1), hy = (ymax - ymin) / (ny - 1);

  // CFL: one explicit step must not jump more than a cell fraction.
  double fmax1 = 0.0, fmax2 = 0.0;
  for (int iy = 0; iy < ny; iy += 4)
    for (int ix = 0; ix < nx; ix += 4)
      for (double u : controls)
        for (double delta : deltas) {
          double f1, f2;
          dyn(xmin + ix * hx, ymin + iy * hy, u, delta, f1, f2);
          fmax1 = std::max(fmax1, std::abs(f1));
          fmax2 = std::max(fmax2, std::abs(f2));
        }
  double dt = T;
  if (fmax1 > 1e-12) dt = std::min(dt, cfl * hx / fmax1);
  if (fmax2 > 1e-12) dt = std::min(dt, cfl * hy / fmax2);
  const int steps = std::max(1, static_cast<int>(std::ceil(T / dt - 1e-12)));
  dt = T / steps;
  res.steps = steps;
  res.dt = dt;

  const double big = 1e30;
  auto interp = [&](const std::vector<double>& W, double x, double y) -> double {
    // Bilinear interpolation; leaving the grid counts as failure (the oracle
    // only certifies what stays observable).
    const double gx = (x - xmin) / hx, gy = (y - ymin) / hy;
    if (gx < 0.0 || gy < 0.0 || gx > nx - 1 || gy > ny - 1) return big;
    const int ix = std::min(static_cast<int>(gx), nx - 2);
    const int iy = std::min(static_cast<int>(gy), ny - 2);
    const double ax = gx - ix, ay = gy - iy;
    const double w00 = W[static_cast<size_t>(iy) * nx + ix];
    const double w10 = W[static_cast<size_t>(iy) * nx + ix + 1];
    const double w01 = W[static_cast<size_t>(iy + 1) * nx + ix];
    const double w11 = W[static_cast<size_t>(iy + 1) * nx + ix + 1];
    return (1 - ax) * (1 - ay) * w00 + ax * (1 - ay) * w10 + (1 - ax) * ay * w01 +
           ax * ay * w11;
  };

  res.inside.assign(static_cast<size_t>(nx) * ny, 1);
  std::vector<double> W(static_cast<size_t>(nx) * ny), Wnext(W.size());
  std::unordered_map<std::string, double> vals;
  for (double delta : deltas) {
    // Terminal condition: the target level function.
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        vals[state_names[0]] = xmin + ix * hx;
        vals[state_names[1]] = ymin + iy * hy;
        W[static_cast<size_t>(iy) * nx + ix] = px.evaluate(vals);
      }
    for (int step = 0; step < steps; ++step) {
      for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
          const double x = xmin + ix * hx, y = ymin + iy * hy;
          double best = big;
          for (double u : controls) {
            double f1, f2;
            dyn(x, y, u, delta, f1, f2);
            best = std::min(best, interp(W, x + dt * f1, y + dt * f2));
          }
          Wnext[static_cast<size_t>(iy) * nx + ix] = best;
        }
      W.swap(Wnext);
    }
    for (size_t i = 0; i < W.size(); ++i)
      if (W[i] > 0.0) res.inside[i] = 0;
  }
  return res;
}

}  // namespace brs
