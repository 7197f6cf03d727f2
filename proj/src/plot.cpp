#include "eftcl/plot.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace eftcl {

namespace {

constexpr int kWidth = 640, kHeight = 420;
constexpr int kLeft = 70, kRight = 30, kTop = 40, kBottom = 60;

double xpos(std::int64_t t, std::int64_t n) {
  if (n == 1) return kLeft + (kWidth - kLeft - kRight) / 2.0;
  return kLeft + (kWidth - kLeft - kRight) * static_cast<double>(t) /
                     static_cast<double>(n - 1);
}

double ypos(double acc) { return kTop + (kHeight - kTop - kBottom) * (1.0 - acc); }

void polyline(std::ostringstream& os, const std::vector<double>& values, const char* color) {
  os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
  for (std::size_t t = 0; t < values.size(); ++t) {
    os << xpos(static_cast<std::int64_t>(t), static_cast<std::int64_t>(values.size())) << ","
       << ypos(values[t]) << " ";
  }
  os << "\"/>\n";
  for (std::size_t t = 0; t < values.size(); ++t) {
    os << "  <circle cx=\"" << xpos(static_cast<std::int64_t>(t),
                                    static_cast<std::int64_t>(values.size()))
       << "\" cy=\"" << ypos(values[t]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
  }
}

}  // namespace

std::string accuracy_curves_svg(const AccuracyMatrix& til, const AccuracyMatrix& cil) {
  EFTCL_CHECK(til.tasks == cil.tasks && til.tasks >= 1, "matrix shape mismatch");
  const std::int64_t n = til.tasks;
  std::vector<double> til_avg, cil_avg;
  for (std::int64_t t = 0; t < n; ++t) {
    til_avg.push_back(til.avg_after(t));
    cil_avg.push_back(cil.avg_after(t));
  }

  std::ostringstream os;
  os.precision(17);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "  <desc>til=";
  for (std::int64_t t = 0; t < n; ++t) os << (t ? "," : "") << til_avg[static_cast<std::size_t>(t)];
  os << ";cil=";
  for (std::int64_t t = 0; t < n; ++t) os << (t ? "," : "") << cil_avg[static_cast<std::size_t>(t)];
  os << "</desc>\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  // axes
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << ypos(0.0) << "\" x2=\"" << kWidth - kRight
     << "\" y2=\"" << ypos(0.0) << "\" stroke=\"black\"/>\n";
  os << "  <line x1=\"" << kLeft << "\" y1=\"" << ypos(0.0) << "\" x2=\"" << kLeft << "\" y2=\""
     << ypos(1.0) << "\" stroke=\"black\"/>\n";
  for (int g = 0; g <= 10; g += 2) {
    const double acc = g / 10.0;
    os << "  <line x1=\"" << kLeft - 4 << "\" y1=\"" << ypos(acc) << "\" x2=\"" << kLeft
       << "\" y2=\"" << ypos(acc) << "\" stroke=\"black\"/>\n";
    os << "  <text x=\"" << kLeft - 10 << "\" y=\"" << ypos(acc) + 4
       << "\" font-size=\"12\" text-anchor=\"end\">" << acc << "</text>\n";
  }
  for (std::int64_t t = 0; t < n; ++t) {
    os << "  <text x=\"" << xpos(t, n) << "\" y=\"" << ypos(0.0) + 18
       << "\" font-size=\"12\" text-anchor=\"middle\">" << t + 1 << "</text>\n";
  }
  os << "  <text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 14
     << "\" font-size=\"13\" text-anchor=\"middle\">tasks seen</text>\n";
  os << "  <text x=\"18\" y=\"" << (kTop + kHeight - kBottom) / 2
     << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (kTop + kHeight - kBottom) / 2 << ")\">average accuracy</text>\n";

  polyline(os, til_avg, "#1f77b4");
  polyline(os, cil_avg, "#d62728");

  os << "  <text x=\"" << kWidth - kRight - 120 << "\" y=\"" << kTop
     << "\" font-size=\"13\" fill=\"#1f77b4\">TIL</text>\n";
  os << "  <text x=\"" << kWidth - kRight - 70 << "\" y=\"" << kTop
     << "\" font-size=\"13\" fill=\"#d62728\">CIL</text>\n";
  os << "</svg>\n";
  return os.str();
}

std::string sample_grid_pnm(const Tensor& images, std::int64_t columns) {
  EFTCL_CHECK(images.rank() == 4, "sample grid expects (N, C, H, W) images");
  const std::int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  EFTCL_CHECK(c == 1 || c == 3, "sample grid supports 1- or 3-channel images");
  columns = std::max<std::int64_t>(1, std::min(columns, n));
  const std::int64_t rows = (n + columns - 1) / columns;
  const std::int64_t gw = columns * w, gh = rows * h;

  std::ostringstream os;
  os << (c == 1 ? "P5" : "P6") << "\n" << gw << " " << gh << "\n255\n";
  std::string pixels(static_cast<std::size_t>(gw * gh * c), '\0');
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t gy = (i / columns) * h, gx = (i % columns) * w;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          const double v = std::clamp((images.at(i, ch, y, x) + 1.0) / 2.0, 0.0, 1.0);
          const std::size_t idx =
              static_cast<std::size_t>(((gy + y) * gw + gx + x) * c + ch);
          pixels[idx] = static_cast<char>(std::lround(v * 255.0));
        }
      }
    }
  }
  os << pixels;
  return os.str();
}

}  // namespace eftcl
