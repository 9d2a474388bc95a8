#pragma once

#include <zlib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pinn/checkpoint.hpp"
#include "pinn/metrics.hpp"
#include "pinn/spectral.hpp"

// Tables and plots. Every emitter is a pure function from values to bytes:
// no timestamps, no locale, fixed float formatting, so re-emitting the same
// data reproduces the same file exactly.

namespace pinn {

// Display floor for log-scale panels. Values are clamped to this only for
// drawing; tables and CSV always carry the raw numbers.
inline constexpr double kLogFloor = 1e-18;

namespace detail {

inline std::string fmt17(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

inline std::string fmt3(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.2e", v);
    return b;
}

inline std::string fmt_px(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.2f", v);
    return b;
}

inline double parse_double(const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str()) throw ConfigError("bad number '" + s + "' in table");
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return out;
}

inline std::vector<std::string> csv_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        std::string line = text.substr(start, nl - start);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty() && line[0] != '#') lines.push_back(std::move(line));
        start = nl + 1;
    }
    return lines;
}

// --- png ------------------------------------------------------------------

inline void append_u32be(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>((v >> 24) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>(v & 0xff));
}

inline void png_chunk(std::string& out, const char* type, const std::string& data) {
    append_u32be(out, static_cast<std::uint32_t>(data.size()));
    std::string block(type, 4);
    block += data;
    out += block;
    append_u32be(out, static_cast<std::uint32_t>(::crc32(
                          0L, reinterpret_cast<const Bytef*>(block.data()),
                          static_cast<uInt>(block.size()))));
}

// 8-bit RGBA, filter 0 on every row, one zlib stream.
inline std::string png_rgba(int w, int h, const std::vector<unsigned char>& rgba) {
    if (w < 1 || h < 1 || rgba.size() != static_cast<std::size_t>(4) * w * h)
        throw StructuralError("pixel buffer does not match image size");
    std::string raw;
    raw.reserve(static_cast<std::size_t>(h) * (4 * w + 1));
    for (int y = 0; y < h; ++y) {
        raw.push_back('\0');
        raw.append(reinterpret_cast<const char*>(rgba.data()) +
                       static_cast<std::size_t>(y) * 4 * w,
                   static_cast<std::size_t>(4) * w);
    }
    uLongf cap = compressBound(static_cast<uLong>(raw.size()));
    std::string comp(cap, '\0');
    if (compress2(reinterpret_cast<Bytef*>(comp.data()), &cap,
                  reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                  9) != Z_OK)
        throw StructuralError("png compression failed");
    comp.resize(cap);

    std::string ihdr;
    append_u32be(ihdr, static_cast<std::uint32_t>(w));
    append_u32be(ihdr, static_cast<std::uint32_t>(h));
    ihdr += '\x08';  // bit depth
    ihdr += '\x06';  // rgba
    ihdr.append(3, '\0');

    std::string out("\x89PNG\r\n\x1a\n", 8);
    png_chunk(out, "IHDR", ihdr);
    png_chunk(out, "IDAT", comp);
    png_chunk(out, "IEND", "");
    return out;
}

inline std::string base64(const std::string& bytes) {
    static const char tab[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const unsigned a = static_cast<unsigned char>(bytes[i]);
        const unsigned b = static_cast<unsigned char>(bytes[i + 1]);
        const unsigned c = static_cast<unsigned char>(bytes[i + 2]);
        out += tab[a >> 2];
        out += tab[((a & 3) << 4) | (b >> 4)];
        out += tab[((b & 15) << 2) | (c >> 6)];
        out += tab[c & 63];
    }
    if (i + 1 == bytes.size()) {
        const unsigned a = static_cast<unsigned char>(bytes[i]);
        out += tab[a >> 2];
        out += tab[(a & 3) << 4];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const unsigned a = static_cast<unsigned char>(bytes[i]);
        const unsigned b = static_cast<unsigned char>(bytes[i + 1]);
        out += tab[a >> 2];
        out += tab[((a & 3) << 4) | (b >> 4)];
        out += tab[(b & 15) << 2];
        out += '=';
    }
    return out;
}

// Fixed sequential colormap (dark violet to yellow), linear between anchors.
inline std::array<unsigned char, 3> heat_color(double t) {
    static constexpr double anchors[5][3] = {{68, 1, 84},
                                             {59, 82, 139},
                                             {33, 145, 140},
                                             {94, 201, 98},
                                             {253, 231, 37}};
    t = std::clamp(t, 0.0, 1.0) * 4.0;
    const int seg = std::min(static_cast<int>(t), 3);
    const double f = t - seg;
    std::array<unsigned char, 3> c{};
    for (int i = 0; i < 3; ++i)
        c[static_cast<std::size_t>(i)] = static_cast<unsigned char>(
            std::lround(anchors[seg][i] + f * (anchors[seg + 1][i] - anchors[seg][i])));
    return c;
}

// Bilinear sample of validation-grid values at a domain point. Polar grids
// wrap in the angular index; points outside the disk report !inside.
inline double sample_grid(const ProblemSpec& spec, const Eigen::ArrayXd& vals, double x,
                          double y, bool& inside) {
    const int nx = spec.grid_nx, ny = spec.grid_ny;
    inside = true;
    if (spec.grid_kind == GridKind::Box) {
        double u = (x - spec.bbox[0]) / (spec.bbox[1] - spec.bbox[0]) * (nx - 1);
        double v = (y - spec.bbox[2]) / (spec.bbox[3] - spec.bbox[2]) * (ny - 1);
        u = std::clamp(u, 0.0, nx - 1.0);
        v = std::clamp(v, 0.0, ny - 1.0);
        const int i0 = std::min(static_cast<int>(u), nx - 2);
        const int j0 = std::min(static_cast<int>(v), ny - 2);
        const double fu = u - i0, fv = v - j0;
        auto at = [&](int i, int j) { return vals[static_cast<Eigen::Index>(i) * ny + j]; };
        return (1 - fu) * ((1 - fv) * at(i0, j0) + fv * at(i0, j0 + 1)) +
               fu * ((1 - fv) * at(i0 + 1, j0) + fv * at(i0 + 1, j0 + 1));
    }
    const double r = std::hypot(x, y);
    if (r > 1.0) {
        inside = false;
        return 0.0;
    }
    double a = std::atan2(y, x);
    if (a < 0) a += 2.0 * std::numbers::pi;
    const double u = std::min(r, 1.0) * (nx - 1);
    double v = a / (2.0 * std::numbers::pi) * ny;
    if (v >= ny) v -= ny;
    const int i0 = std::min(static_cast<int>(u), nx - 2);
    const int j0 = std::min(static_cast<int>(v), ny - 1);
    const int j1 = (j0 + 1) % ny;
    const double fu = u - i0, fv = v - j0;
    auto at = [&](int i, int j) { return vals[static_cast<Eigen::Index>(i) * ny + j]; };
    return (1 - fu) * ((1 - fv) * at(i0, j0) + fv * at(i0, j1)) +
           fu * ((1 - fv) * at(i0 + 1, j0) + fv * at(i0 + 1, j1));
}

inline std::string field_png(const ProblemSpec& spec, const Eigen::ArrayXd& vals, double vmin,
                             double vmax, int* out_w, int* out_h) {
    const bool polar = spec.grid_kind == GridKind::Polar;
    const double x0 = polar ? -1.0 : spec.bbox[0], x1 = polar ? 1.0 : spec.bbox[1];
    const double y0 = polar ? -1.0 : spec.bbox[2], y1 = polar ? 1.0 : spec.bbox[3];
    const int w = 512;
    const int h = std::max(1, static_cast<int>(std::lround(w * (y1 - y0) / (x1 - x0))));
    const double span = vmax > vmin ? vmax - vmin : 1.0;

    std::vector<unsigned char> rgba(static_cast<std::size_t>(4) * w * h, 0);
    for (int py = 0; py < h; ++py) {
        const double y = y1 - (py + 0.5) / h * (y1 - y0);
        for (int px = 0; px < w; ++px) {
            const double x = x0 + (px + 0.5) / w * (x1 - x0);
            bool inside = true;
            const double val = sample_grid(spec, vals, x, y, inside);
            auto* p = &rgba[(static_cast<std::size_t>(py) * w + px) * 4];
            if (!inside) continue;  // transparent mask outside the disk
            const auto c = heat_color((val - vmin) / span);
            p[0] = c[0];
            p[1] = c[1];
            p[2] = c[2];
            p[3] = 255;
        }
    }
    *out_w = w;
    *out_h = h;
    return png_rgba(w, h, rgba);
}

// --- svg ------------------------------------------------------------------

inline void svg_open(std::string& s, double w, double h) {
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_px(w) + "\" height=\"" +
         fmt_px(h) + "\" viewBox=\"0 0 " + fmt_px(w) + " " + fmt_px(h) + "\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"" + fmt_px(w) + "\" height=\"" + fmt_px(h) +
         "\" fill=\"#ffffff\"/>\n";
}

inline void svg_text(std::string& s, double x, double y, const std::string& t, int size = 12,
                     const char* anchor = "start", const char* color = "#202020") {
    s += "<text x=\"" + fmt_px(x) + "\" y=\"" + fmt_px(y) + "\" font-family=\"monospace\"" +
         " font-size=\"" + std::to_string(size) + "\" text-anchor=\"" + anchor + "\" fill=\"" +
         color + "\">" + t + "</text>\n";
}

inline void svg_line(std::string& s, double x1, double y1, double x2, double y2,
                     const char* color, double width = 1.0, const char* dash = nullptr) {
    s += "<line x1=\"" + fmt_px(x1) + "\" y1=\"" + fmt_px(y1) + "\" x2=\"" + fmt_px(x2) +
         "\" y2=\"" + fmt_px(y2) + "\" stroke=\"" + color + "\" stroke-width=\"" +
         fmt_px(width) + "\"";
    if (dash) s += std::string(" stroke-dasharray=\"") + dash + "\"";
    s += "/>\n";
}

inline std::string points_attr(const std::vector<std::pair<double, double>>& pts) {
    std::string a;
    for (const auto& [x, y] : pts) a += fmt_px(x) + "," + fmt_px(y) + " ";
    if (!a.empty()) a.pop_back();
    return a;
}

inline void svg_polyline(std::string& s, const std::vector<std::pair<double, double>>& pts,
                         const char* color, double width, const std::string& id = "",
                         const char* dash = nullptr) {
    if (pts.empty()) return;
    s += "<polyline";
    if (!id.empty()) s += " id=\"" + id + "\"";
    s += " fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"" + fmt_px(width) +
         "\"";
    if (dash) s += std::string(" stroke-dasharray=\"") + dash + "\"";
    s += " points=\"" + points_attr(pts) + "\"/>\n";
}

inline void svg_polygon(std::string& s, const std::vector<std::pair<double, double>>& pts,
                        const char* fill, double opacity) {
    if (pts.empty()) return;
    s += "<polygon fill=\"" + std::string(fill) + "\" fill-opacity=\"" + fmt_px(opacity) +
         "\" stroke=\"none\" points=\"" + points_attr(pts) + "\"/>\n";
}

// Pixel frame of one plot panel; data ranges map linearly, y flipped.
struct Panel {
    double x = 0, y = 0, w = 0, h = 0;
    double dx0 = 0, dx1 = 1, dy0 = 0, dy1 = 1;

    double px(double v) const { return x + (v - dx0) / (dx1 - dx0) * w; }
    double py(double v) const { return y + h - (v - dy0) / (dy1 - dy0) * h; }
};

inline void pad_range(double& lo, double& hi) {
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
        return;
    }
    const double m = 0.04 * (hi - lo);
    lo -= m;
    hi += m;
}

inline double nice_step(double span, int target) {
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double n = raw / mag;
    return (n < 1.5 ? 1.0 : n < 3.5 ? 2.0 : n < 7.5 ? 5.0 : 10.0) * mag;
}

inline std::string tick_label(double v, bool decade) {
    char b[40];
    if (decade)
        std::snprintf(b, sizeof b, "1e%+03d", static_cast<int>(std::lround(v)));
    else
        std::snprintf(b, sizeof b, "%.4g", v);
    return b;
}

// Border, ticks and labels; y_decades renders y values as powers of ten.
inline void draw_frame(std::string& s, const Panel& p, const std::string& title,
                       const std::string& xlabel, bool y_decades) {
    s += "<rect x=\"" + fmt_px(p.x) + "\" y=\"" + fmt_px(p.y) + "\" width=\"" + fmt_px(p.w) +
         "\" height=\"" + fmt_px(p.h) +
         "\" fill=\"none\" stroke=\"#404040\" stroke-width=\"1\"/>\n";
    svg_text(s, p.x + p.w / 2, p.y - 8, title, 13, "middle");
    svg_text(s, p.x + p.w / 2, p.y + p.h + 30, xlabel, 12, "middle");

    const double xstep = nice_step(p.dx1 - p.dx0, 5);
    for (double t = std::ceil(p.dx0 / xstep) * xstep; t <= p.dx1 + 1e-9 * xstep; t += xstep) {
        const double X = p.px(t);
        svg_line(s, X, p.y + p.h, X, p.y + p.h + 4, "#404040");
        svg_text(s, X, p.y + p.h + 16, tick_label(t, false), 10, "middle");
    }
    const double yspan = p.dy1 - p.dy0;
    const double ystep = y_decades ? std::max(1.0, std::ceil(yspan / 6.0)) : nice_step(yspan, 5);
    for (double t = std::ceil(p.dy0 / ystep) * ystep; t <= p.dy1 + 1e-9 * ystep; t += ystep) {
        const double Y = p.py(t);
        svg_line(s, p.x - 4, Y, p.x, Y, "#404040");
        svg_text(s, p.x - 6, Y + 3, tick_label(t, y_decades), 10, "end");
    }
}

inline constexpr const char* kBlue = "#1f77b4";
inline constexpr const char* kOrange = "#ff7f0e";

inline const char* series_color(std::size_t i) { return i % 2 == 0 ? kBlue : kOrange; }

inline double log_floor(double v) { return std::log10(std::max(v, kLogFloor)); }

}  // namespace detail

// --- metric tables ----------------------------------------------------------

// Rows grouped by problem in order of first appearance; within a problem the
// gated model sorts first so paired tables always lead with it.
inline std::vector<MetricRecord> table_order(std::vector<MetricRecord> rows) {
    std::vector<std::string> problems;
    for (const auto& r : rows)
        if (std::find(problems.begin(), problems.end(), r.problem) == problems.end())
            problems.push_back(r.problem);
    auto key = [&problems](const MetricRecord& r) {
        const auto g = std::find(problems.begin(), problems.end(), r.problem) - problems.begin();
        return std::pair<long, int>(g, r.model_tag == "xlstm" ? 0 : 1);
    };
    std::stable_sort(rows.begin(), rows.end(),
                     [&key](const MetricRecord& a, const MetricRecord& b) {
                         return key(a) < key(b);
                     });
    return rows;
}

inline constexpr const char* kMetricsHeader = "problem,model,grid,mse,rmse,mae,maxae";

// Lossless: doubles printed with 17 significant digits parse back bit-exact.
inline std::string metrics_csv(const std::vector<MetricRecord>& rows,
                               const std::string& comment = "") {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += kMetricsHeader;
    out += '\n';
    for (const auto& r : table_order(rows)) {
        out += r.problem + "," + r.model_tag + "," + r.grid + "," + detail::fmt17(r.mse) + "," +
               detail::fmt17(r.rmse) + "," + detail::fmt17(r.mae) + "," +
               detail::fmt17(r.maxae) + "\n";
    }
    return out;
}

inline std::vector<MetricRecord> parse_metrics_csv(const std::string& text) {
    const auto lines = detail::csv_lines(text);
    if (lines.empty() || lines[0] != kMetricsHeader)
        throw ConfigError("metrics table has a wrong or missing header");
    std::vector<MetricRecord> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = detail::split_csv_line(lines[i]);
        if (f.size() != 7) throw ConfigError("metrics row has wrong field count");
        MetricRecord r;
        r.problem = f[0];
        r.model_tag = f[1];
        r.grid = f[2];
        r.mse = detail::parse_double(f[3]);
        r.rmse = detail::parse_double(f[4]);
        r.mae = detail::parse_double(f[5]);
        r.maxae = detail::parse_double(f[6]);
        rows.push_back(std::move(r));
    }
    return rows;
}

// Human-readable twin of the CSV, three significant figures.
inline std::string metrics_text(const std::vector<MetricRecord>& rows) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %-9s %-11s %-9s %-9s %-9s %-9s\n", "problem",
                  "model", "grid", "MSE", "RMSE", "MAE", "MaxAE");
    out += line;
    for (const auto& r : table_order(rows)) {
        std::snprintf(line, sizeof line, "%-12s %-9s %-11s %s %s %s %s\n", r.problem.c_str(),
                      r.model_tag.c_str(), r.grid.c_str(), detail::fmt3(r.mse).c_str(),
                      detail::fmt3(r.rmse).c_str(), detail::fmt3(r.mae).c_str(),
                      detail::fmt3(r.maxae).c_str());
        out += line;
    }
    return out;
}

// --- spectral table ---------------------------------------------------------

inline constexpr const char* kSpectralHeader =
    "k,used,mean_err_x,sd_err_x,mean_err_base,sd_err_base,mean_gain,sd_gain,"
    "mean_tau_x,mean_tau_base,censored_x,censored_base";

inline std::string spectral_csv(const FrequencyReport& rep, const std::string& comment = "") {
    std::string out;
    if (!comment.empty()) out += "# " + comment + "\n";
    out += "# kstar_x=" + detail::fmt17(rep.kstar_x) +
           " kstar_base=" + detail::fmt17(rep.kstar_base) + " eps=" + detail::fmt17(rep.eps) +
           " budget=" + std::to_string(rep.budget) + " seeds=" + std::to_string(rep.seeds) +
           " dropped=" + std::to_string(rep.dropped) + "\n";
    out += kSpectralHeader;
    out += '\n';
    for (const auto& b : rep.bands) {
        out += std::to_string(b.k) + "," + std::to_string(b.used) + "," +
               detail::fmt17(b.mean_err_x) + "," + detail::fmt17(b.sd_err_x) + "," +
               detail::fmt17(b.mean_err_base) + "," + detail::fmt17(b.sd_err_base) + "," +
               detail::fmt17(b.mean_gain) + "," + detail::fmt17(b.sd_gain) + "," +
               detail::fmt17(b.mean_tau_x) + "," + detail::fmt17(b.mean_tau_base) + "," +
               std::to_string(b.censored_x) + "," + std::to_string(b.censored_base) + "\n";
    }
    return out;
}

inline std::vector<FrequencyBand> parse_spectral_csv(const std::string& text) {
    const auto lines = detail::csv_lines(text);
    if (lines.empty() || lines[0] != kSpectralHeader)
        throw ConfigError("spectral table has a wrong or missing header");
    std::vector<FrequencyBand> bands;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto f = detail::split_csv_line(lines[i]);
        if (f.size() != 12) throw ConfigError("spectral row has wrong field count");
        FrequencyBand b;
        b.k = static_cast<int>(detail::parse_double(f[0]));
        b.used = static_cast<int>(detail::parse_double(f[1]));
        b.mean_err_x = detail::parse_double(f[2]);
        b.sd_err_x = detail::parse_double(f[3]);
        b.mean_err_base = detail::parse_double(f[4]);
        b.sd_err_base = detail::parse_double(f[5]);
        b.mean_gain = detail::parse_double(f[6]);
        b.sd_gain = detail::parse_double(f[7]);
        b.mean_tau_x = detail::parse_double(f[8]);
        b.mean_tau_base = detail::parse_double(f[9]);
        b.censored_x = static_cast<int>(detail::parse_double(f[10]));
        b.censored_base = static_cast<int>(detail::parse_double(f[11]));
        bands.push_back(b);
    }
    return bands;
}

// --- loss curves ------------------------------------------------------------

struct LossCurve {
    std::string label;
    const std::vector<LossBreakdown>* history = nullptr;
};

// Two panels, linear and log; the log view clamps at the display floor so a
// zero loss still draws. Long histories are strided down for file size.
inline std::string loss_svg(const std::vector<LossCurve>& curves,
                            const std::string& comment = "") {
    const double pw = 380, ph = 280, ml = 70, mt = 40, gap = 70;
    const double W = ml + pw + gap + pw + 30, H = mt + ph + 50;
    detail::Panel lin{ml, mt, pw, ph}, lg{ml + pw + gap, mt, pw, ph};

    double xmax = 1, ymin = 0, ymax = 0, lmin = 0, lmax = 0;
    bool any = false;
    for (const auto& c : curves)
        for (const auto& lb : *c.history) {
            const double lv = detail::log_floor(lb.total);
            if (!any) {
                ymin = ymax = lb.total;
                lmin = lmax = lv;
                any = true;
            }
            xmax = std::max(xmax, static_cast<double>(lb.iteration));
            ymin = std::min(ymin, lb.total);
            ymax = std::max(ymax, lb.total);
            lmin = std::min(lmin, lv);
            lmax = std::max(lmax, lv);
        }
    detail::pad_range(ymin, ymax);
    detail::pad_range(lmin, lmax);
    lin.dx1 = lg.dx1 = xmax;
    lin.dy0 = ymin;
    lin.dy1 = ymax;
    lg.dy0 = lmin;
    lg.dy1 = lmax;

    std::string s;
    detail::svg_open(s, W, H);
    if (!comment.empty()) s += "<!-- " + comment + " -->\n";
    detail::draw_frame(s, lin, "training loss", "iteration", false);
    detail::draw_frame(s, lg, "training loss (log)", "iteration", true);

    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const auto& hist = *curves[ci].history;
        const std::size_t stride = std::max<std::size_t>(1, hist.size() / 2000);
        std::vector<std::pair<double, double>> pl, pg;
        for (std::size_t i = 0; i < hist.size(); i += stride) {
            const auto& lb = hist[i];
            pl.emplace_back(lin.px(lb.iteration), lin.py(lb.total));
            pg.emplace_back(lg.px(lb.iteration), lg.py(detail::log_floor(lb.total)));
        }
        if (!hist.empty() && (hist.size() - 1) % stride != 0) {
            const auto& lb = hist.back();
            pl.emplace_back(lin.px(lb.iteration), lin.py(lb.total));
            pg.emplace_back(lg.px(lb.iteration), lg.py(detail::log_floor(lb.total)));
        }
        const char* color = detail::series_color(ci);
        detail::svg_polyline(s, pl, color, 1.5, "loss-linear-" + curves[ci].label);
        detail::svg_polyline(s, pg, color, 1.5, "loss-log-" + curves[ci].label);
        detail::svg_line(s, lin.x + 8, lin.y + 14 + 16 * ci, lin.x + 28, lin.y + 14 + 16 * ci,
                         color, 2.0);
        detail::svg_text(s, lin.x + 34, lin.y + 18 + 16 * ci, curves[ci].label, 11);
    }
    s += "</svg>\n";
    return s;
}

// --- field heat maps ----------------------------------------------------------

// Reference, prediction and absolute error side by side; first two share one
// color scale, the error panel uses its own. Disk domains mask the outside.
inline std::string fields_svg(const ProblemSpec& spec, const Eigen::ArrayXd& reference,
                              const Eigen::ArrayXd& predicted, const std::string& comment = "") {
    const Eigen::Index n =
        static_cast<Eigen::Index>(spec.grid_nx) * static_cast<Eigen::Index>(spec.grid_ny);
    if (reference.size() != n || predicted.size() != n)
        throw StructuralError("field arrays do not match the validation grid");
    const Eigen::ArrayXd err = (predicted - reference).abs();

    const double v0 = std::min(reference.minCoeff(), predicted.minCoeff());
    const double v1 = std::max(reference.maxCoeff(), predicted.maxCoeff());

    struct Sub {
        const Eigen::ArrayXd* vals;
        std::string title;
        double lo, hi;
    };
    const Sub subs[3] = {{&reference, "reference", v0, v1},
                         {&predicted, "prediction", v0, v1},
                         {&err, "absolute error", 0.0, err.maxCoeff()}};

    const double pad = 16, title_h = 26;
    std::string images;
    int iw = 0, ih = 0;
    double x = pad;
    std::string s;
    for (const auto& sub : subs) {
        const std::string png = detail::field_png(spec, *sub.vals, sub.lo, sub.hi, &iw, &ih);
        images += "<image x=\"" + detail::fmt_px(x) + "\" y=\"" + detail::fmt_px(title_h) +
                  "\" width=\"" + std::to_string(iw) + "\" height=\"" + std::to_string(ih) +
                  "\" href=\"data:image/png;base64," + detail::base64(png) + "\"/>\n";
        images += "<text x=\"" + detail::fmt_px(x + iw / 2.0) +
                  "\" y=\"18\" font-family=\"monospace\" font-size=\"13\" "
                  "text-anchor=\"middle\" fill=\"#202020\">" +
                  sub.title + " [" + detail::fmt3(sub.lo) + ", " + detail::fmt3(sub.hi) +
                  "]</text>\n";
        x += iw + pad;
    }
    detail::svg_open(s, x, title_h + ih + pad);
    if (!comment.empty()) s += "<!-- " + comment + " -->\n";
    s += images;
    s += "</svg>\n";
    return s;
}

// --- spectral panels ----------------------------------------------------------

// Endpoint error, gain and iterations-to-threshold against wavenumber, with
// mean plus/minus one standard deviation bands and resolvability markers.
// Axis ranges follow the means; band edges that fall outside are clipped to
// the panel instead of stretching the scale.
inline std::string spectrum_svg(const FrequencyReport& rep, const std::string& comment = "") {
    const double pw = 340, ph = 280, ml = 70, mt = 40, gap = 80;
    const double W = ml + 3 * pw + 2 * gap + 30, H = mt + ph + 50;
    detail::Panel pe{ml, mt, pw, ph}, pg{ml + pw + gap, mt, pw, ph},
        pt{ml + 2 * (pw + gap), mt, pw, ph};

    double kmin = 0, kmax = 1;
    bool first = true;
    double e0 = 0, e1 = 0, g0 = 0, g1 = 0, t1 = 1;
    for (const auto& b : rep.bands) {
        if (b.used == 0) continue;
        const double k = b.k;
        const double ex = detail::log_floor(b.mean_err_x);
        const double eb = detail::log_floor(b.mean_err_base);
        const double g = detail::log_floor(b.mean_gain);
        if (first) {
            kmin = kmax = k;
            e0 = std::min(ex, eb);
            e1 = std::max(ex, eb);
            g0 = g1 = g;
            first = false;
        }
        kmin = std::min(kmin, k);
        kmax = std::max(kmax, k);
        e0 = std::min(e0, std::min(ex, eb));
        e1 = std::max(e1, std::max(ex, eb));
        g0 = std::min(g0, std::min(g, 0.0));
        g1 = std::max(g1, std::max(g, 0.0));
        t1 = std::max({t1, b.mean_tau_x, b.mean_tau_base});
    }
    e0 = std::min(e0, detail::log_floor(rep.eps));
    detail::pad_range(e0, e1);
    detail::pad_range(g0, g1);
    if (!(kmax > kmin)) kmax = kmin + 1;
    pe.dx0 = pg.dx0 = pt.dx0 = kmin;
    pe.dx1 = pg.dx1 = pt.dx1 = kmax;
    pe.dy0 = e0;
    pe.dy1 = e1;
    pg.dy0 = g0;
    pg.dy1 = g1;
    pt.dy1 = std::max(1.0, 1.08 * t1);

    std::string s;
    detail::svg_open(s, W, H);
    if (!comment.empty()) s += "<!-- " + comment + " -->\n";
    const detail::Panel* panels[3] = {&pe, &pg, &pt};
    const char* clip_ids[3] = {"clip-err", "clip-gain", "clip-tau"};
    for (int i = 0; i < 3; ++i)
        s += std::string("<clipPath id=\"") + clip_ids[i] + "\"><rect x=\"" +
             detail::fmt_px(panels[i]->x) + "\" y=\"" + detail::fmt_px(panels[i]->y) +
             "\" width=\"" + detail::fmt_px(panels[i]->w) + "\" height=\"" +
             detail::fmt_px(panels[i]->h) + "\"/></clipPath>\n";
    detail::draw_frame(s, pe, "relative error at budget end", "wavenumber k", true);
    detail::draw_frame(s, pg, "error gain (base / gated)", "wavenumber k", true);
    detail::draw_frame(s, pt, "iterations to reach eps", "wavenumber k", false);

    auto band_points = [&rep](auto&& mean_of, auto&& sd_of, const detail::Panel& p, bool logy) {
        std::vector<std::pair<double, double>> line, band;
        std::vector<std::pair<double, double>> lower;
        for (const auto& b : rep.bands) {
            if (b.used == 0) continue;
            const double m = mean_of(b), sd = sd_of(b);
            const double mid = logy ? detail::log_floor(m) : m;
            const double up = logy ? detail::log_floor(m + sd) : m + sd;
            const double dn = logy ? detail::log_floor(m - sd) : std::max(m - sd, 0.0);
            line.emplace_back(p.px(b.k), p.py(mid));
            band.emplace_back(p.px(b.k), p.py(up));
            lower.emplace_back(p.px(b.k), p.py(dn));
        }
        for (auto it = lower.rbegin(); it != lower.rend(); ++it) band.push_back(*it);
        return std::pair(line, band);
    };

    auto draw_series = [&s, &band_points](const detail::Panel& p, const char* clip,
                                          auto&& mean_of, auto&& sd_of, bool logy,
                                          const char* color, const std::string& id) {
        auto [line, band] = band_points(mean_of, sd_of, p, logy);
        s += std::string("<g clip-path=\"url(#") + clip + ")\">\n";
        detail::svg_polygon(s, band, color, 0.15);
        detail::svg_polyline(s, line, color, 1.5, id);
        s += "</g>\n";
    };

    draw_series(pe, "clip-err", [](const FrequencyBand& b) { return b.mean_err_x; },
                [](const FrequencyBand& b) { return b.sd_err_x; }, true, detail::kBlue,
                "err-xlstm");
    draw_series(pe, "clip-err", [](const FrequencyBand& b) { return b.mean_err_base; },
                [](const FrequencyBand& b) { return b.sd_err_base; }, true, detail::kOrange,
                "err-baseline");
    detail::svg_line(s, pe.px(pe.dx0), pe.py(detail::log_floor(rep.eps)), pe.px(pe.dx1),
                     pe.py(detail::log_floor(rep.eps)), "#808080", 1.0, "4,3");

    draw_series(pg, "clip-gain", [](const FrequencyBand& b) { return b.mean_gain; },
                [](const FrequencyBand& b) { return b.sd_gain; }, true, detail::kBlue, "gain");
    detail::svg_line(s, pg.px(pg.dx0), pg.py(0.0), pg.px(pg.dx1), pg.py(0.0), "#808080", 1.0,
                     "4,3");

    draw_series(pt, "clip-tau", [](const FrequencyBand& b) { return b.mean_tau_x; },
                [](const FrequencyBand&) { return 0.0; }, false, detail::kBlue, "tau-xlstm");
    draw_series(pt, "clip-tau", [](const FrequencyBand& b) { return b.mean_tau_base; },
                [](const FrequencyBand&) { return 0.0; }, false, detail::kOrange,
                "tau-baseline");
    if (rep.budget >= 1 && rep.budget <= pt.dy1)
        detail::svg_line(s, pt.px(pt.dx0), pt.py(rep.budget), pt.px(pt.dx1), pt.py(rep.budget),
                         "#808080", 1.0, "4,3");

    // resolvable-bandwidth markers on the error panel
    auto kmark = [&s, &pe](double k, const char* color, const std::string& label) {
        if (k < pe.dx0 || k > pe.dx1) return;
        detail::svg_line(s, pe.px(k), pe.y, pe.px(k), pe.y + pe.h, color, 1.2, "6,3");
        detail::svg_text(s, pe.px(k) + 3, pe.y + 14, label, 10, "start", color);
    };
    kmark(rep.kstar_x, detail::kBlue, "k* gated");
    kmark(rep.kstar_base, detail::kOrange, "k* base");

    detail::svg_line(s, pe.x + 8, pe.y + ph - 30, pe.x + 28, pe.y + ph - 30, detail::kBlue, 2.0);
    detail::svg_text(s, pe.x + 34, pe.y + ph - 26, "gated", 11);
    detail::svg_line(s, pe.x + 8, pe.y + ph - 14, pe.x + 28, pe.y + ph - 14, detail::kOrange,
                     2.0);
    detail::svg_text(s, pe.x + 34, pe.y + ph - 10, "baseline", 11);

    s += "</svg>\n";
    return s;
}

// --- artifact layout ----------------------------------------------------------

struct RunPaths {
    std::filesystem::path dir, metrics_csv, history_json, fields_svg, loss_svg, params;
};

inline RunPaths run_paths(const std::filesystem::path& root, const std::string& problem,
                          const std::string& model_tag) {
    RunPaths p;
    p.dir = root / "runs" / problem / model_tag;
    p.metrics_csv = p.dir / "metrics.csv";
    p.history_json = p.dir / "history.json";
    p.fields_svg = p.dir / "fields.svg";
    p.loss_svg = p.dir / "loss.svg";
    p.params = p.dir / "params.ckpt";
    return p;
}

// One model's artifact set; returns its validation metrics.
inline MetricRecord write_run_artifacts(const std::filesystem::path& root,
                                        const ProblemSpec& spec, const RunRecord& rec,
                                        const std::string& comment) {
    const RunPaths paths = run_paths(root, spec.name, rec.model_tag);
    const ParamLayout lay = ParamLayout::build(rec.model);

    const Arr grid = validation_grid(spec);
    Eigen::ArrayXd ref(grid.rows());
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        const std::array<double, 2> p{grid(i, 0), grid(i, 1)};
        ref[i] = spec.reference(p);
    }
    const Eigen::ArrayXd pred = forward_batch(rec.model, lay, rec.theta, grid);
    const MetricRecord mr =
        metrics(pred, ref, spec.name, rec.model_tag, grid_descriptor(spec));

    detail::write_file(paths.metrics_csv, metrics_csv({mr}, comment));
    save_history(paths.history_json, rec);
    save_checkpoint(paths.params, rec.model, {{"theta", rec.theta}});
    detail::write_file(paths.fields_svg, fields_svg(spec, ref, pred, comment));
    detail::write_file(paths.loss_svg, loss_svg({{rec.model_tag, &rec.history}}, comment));
    return mr;
}

// Paired layout: per-model artifact sets plus a combined table and a joint
// loss plot at the problem level.
inline std::vector<MetricRecord> write_pair_artifacts(const std::filesystem::path& root,
                                                      const ProblemSpec& spec,
                                                      const PairedRuns& pair,
                                                      const std::string& comment) {
    const MetricRecord mx = write_run_artifacts(root, spec, pair.xlstm, comment);
    const MetricRecord mb = write_run_artifacts(root, spec, pair.baseline, comment);
    const std::vector<MetricRecord> both{mx, mb};
    detail::write_file(root / "runs" / spec.name / "metrics.csv", metrics_csv(both, comment));
    detail::write_file(root / "runs" / spec.name / "loss.svg",
                       loss_svg({{pair.xlstm.model_tag, &pair.xlstm.history},
                                 {pair.baseline.model_tag, &pair.baseline.history}},
                                comment));
    return both;
}

inline void write_spectral_artifacts(const std::filesystem::path& root,
                                     const FrequencyReport& rep, const std::string& comment) {
    detail::write_file(root / "spectral" / "report.csv", spectral_csv(rep, comment));
    detail::write_file(root / "spectral" / "spectrum.svg", spectrum_svg(rep, comment));
}

}  // namespace pinn
