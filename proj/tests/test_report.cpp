#include <catch2/catch_amalgamated.hpp>

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "pinn/metrics.hpp"
#include "pinn/report.hpp"
#include "pinn/training.hpp"

using namespace pinn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ProblemSpec trimmed(ProblemSpec spec, const std::vector<int>& counts) {
    for (std::size_t i = 0; i < counts.size(); ++i) spec.sets[i].count = counts[i];
    return spec;
}

Eigen::ArrayXd reference_on_grid(const ProblemSpec& spec) {
    const Arr grid = validation_grid(spec);
    Eigen::ArrayXd vals(grid.rows());
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        const std::array<double, 2> p{grid(i, 0), grid(i, 1)};
        vals[i] = spec.reference(p);
    }
    return vals;
}

// Attribute of the element carrying the given id; empty if absent.
std::string svg_attr(const std::string& svg, const std::string& id, const std::string& attr) {
    const auto at = svg.find("id=\"" + id + "\"");
    if (at == std::string::npos) return "";
    const auto close = svg.find('>', at);
    const auto start = svg.find(attr + "=\"", at);
    if (start == std::string::npos || start > close) return "";
    const auto open = start + attr.size() + 2;
    return svg.substr(open, svg.find('"', open) - open);
}

std::vector<std::pair<double, double>> parse_points(const std::string& attr) {
    std::vector<std::pair<double, double>> pts;
    const char* p = attr.c_str();
    char* end = nullptr;
    while (*p) {
        const double x = std::strtod(p, &end);
        if (end == p) break;
        p = end + 1;  // comma
        const double y = std::strtod(p, &end);
        pts.emplace_back(x, y);
        p = end;
        while (*p == ' ') ++p;
    }
    return pts;
}

// Strict reader for the exact PNG subset the report emits: one IDAT chunk,
// 8-bit RGBA, filter byte 0 on every row. Independent of the encoder.
std::vector<unsigned char> decode_png_rgba(const std::string& png, int& w, int& h) {
    REQUIRE(png.size() > 45);
    REQUIRE(png.compare(0, 8, "\x89PNG\r\n\x1a\n", 8) == 0);
    auto u32 = [&png](std::size_t at) {
        return (static_cast<std::uint32_t>(static_cast<unsigned char>(png[at])) << 24) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(png[at + 1])) << 16) |
               (static_cast<std::uint32_t>(static_cast<unsigned char>(png[at + 2])) << 8) |
               static_cast<std::uint32_t>(static_cast<unsigned char>(png[at + 3]));
    };
    REQUIRE(png.compare(12, 4, "IHDR") == 0);
    w = static_cast<int>(u32(16));
    h = static_cast<int>(u32(20));
    REQUIRE(static_cast<unsigned char>(png[24]) == 8);   // bit depth
    REQUIRE(static_cast<unsigned char>(png[25]) == 6);   // rgba

    std::string compressed;
    std::size_t at = 8;
    while (at + 8 <= png.size()) {
        const std::uint32_t len = u32(at);
        const std::string type = png.substr(at + 4, 4);
        if (type == "IDAT") compressed += png.substr(at + 8, len);
        at += 12 + len;
    }
    REQUIRE_FALSE(compressed.empty());

    const std::size_t stride = static_cast<std::size_t>(4) * w + 1;
    std::vector<unsigned char> raw(stride * h);
    uLongf dlen = static_cast<uLongf>(raw.size());
    REQUIRE(uncompress(raw.data(), &dlen, reinterpret_cast<const Bytef*>(compressed.data()),
                       static_cast<uLong>(compressed.size())) == Z_OK);
    REQUIRE(dlen == raw.size());

    std::vector<unsigned char> rgba(static_cast<std::size_t>(4) * w * h);
    for (int y = 0; y < h; ++y) {
        REQUIRE(raw[stride * y] == 0);  // filter
        std::memcpy(&rgba[static_cast<std::size_t>(4) * w * y], &raw[stride * y + 1], 4 * w);
    }
    return rgba;
}

FrequencyReport toy_report(bool equal_models) {
    FrequencyReport rep;
    rep.budget = 300;
    rep.seeds = 3;
    rep.eps = 0.1;
    rep.kstar_x = 6.0;
    rep.kstar_base = 3.0;
    for (int k = 1; k <= 8; ++k) {
        FrequencyBand b;
        b.k = k;
        b.used = 3;
        b.mean_err_x = 0.01 * k;
        b.sd_err_x = 0.001 * k;
        b.mean_err_base = equal_models ? b.mean_err_x : 0.04 * k * k;
        b.sd_err_base = equal_models ? b.sd_err_x : 0.002 * k;
        b.mean_gain = b.mean_err_base / b.mean_err_x;
        b.sd_gain = equal_models ? 0.0 : 0.3;
        b.mean_tau_x = 20.0 * k;
        b.mean_tau_base = equal_models ? b.mean_tau_x : 50.0 * k;
        b.censored_x = 0;
        b.censored_base = k > 6 ? 1 : 0;
        rep.bands.push_back(b);
    }
    return rep;
}

}  // namespace

TEST_CASE("identical fields score zero on every metric") {
    Eigen::ArrayXd f(5);
    f << -1.0, 0.5, 3.25, -7.0, 0.0;
    const auto r = metrics(f, f, "laplace2d", "xlstm", "201x201");
    CHECK(r.mse == 0.0);
    CHECK(r.rmse == 0.0);
    CHECK(r.mae == 0.0);
    CHECK(r.maxae == 0.0);
    CHECK(r.problem == "laplace2d");
    CHECK(r.model_tag == "xlstm");
    CHECK(r.grid == "201x201");
}

TEST_CASE("a constant offset has closed-form metrics") {
    Eigen::ArrayXd ref = Eigen::ArrayXd::LinSpaced(64, -2.0, 2.0);
    const Eigen::ArrayXd pred = ref + 0.5;
    const auto r = metrics(pred, ref, "p", "m", "g");
    CHECK(r.mse == 0.25);
    CHECK(r.rmse == 0.5);
    CHECK(r.mae == 0.5);
    CHECK(r.maxae == 0.5);
}

TEST_CASE("metric identities hold on random fields") {
    Rng rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 17 + 61 * rep;
        Eigen::ArrayXd a(n), b(n);
        for (int i = 0; i < n; ++i) {
            a[i] = rng.uniform(-1.0, 1.0) * std::pow(10.0, rep % 7 - 3);
            b[i] = rng.uniform(-1.0, 1.0);
        }
        const auto r = metrics(a, b, "p", "m", "g");
        CHECK(r.rmse == std::sqrt(r.mse));
        CHECK(r.mae <= r.rmse + 1e-15);
        CHECK(r.rmse <= r.maxae * (1.0 + 1e-12));
        CHECK(r.maxae <= (a - b).abs().maxCoeff() * (1.0 + 1e-12));
    }
}

TEST_CASE("a non-finite prediction faults with the grid point named") {
    Eigen::ArrayXd ref = Eigen::ArrayXd::Zero(10), pred = Eigen::ArrayXd::Zero(10);
    pred[7] = std::nan("");
    CHECK_THROWS_MATCHES(metrics(pred, ref, "p", "m", "g"), ModelFault,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("grid point 7")));
    pred[7] = 0.0;
    ref[3] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_MATCHES(metrics(pred, ref, "p", "m", "g"), ModelFault,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("grid point 3")));
    CHECK_THROWS_AS(metrics(Eigen::ArrayXd(), Eigen::ArrayXd(), "p", "m", "g"),
                    StructuralError);
}

TEST_CASE("csv metrics are lossless and the text twin uses three digits") {
    std::vector<MetricRecord> rows;
    MetricRecord base{"advection1d", "baseline", "201x101", 1.0 / 3.0, std::sqrt(1.0 / 3.0),
                      6.2832e-7, 1e300};
    MetricRecord x{"advection1d", "xlstm", "201x101", 6.28e-06, 2.5059928171792316e-3,
                   4.9406564584124654e-324, 0.1};
    rows.push_back(base);  // inserted second model first on purpose
    rows.push_back(x);

    const std::string csv = metrics_csv(rows, "cfg {\"seed\":1}");
    CHECK(csv.substr(0, 2) == "# ");
    const auto back = parse_metrics_csv(csv);
    REQUIRE(back.size() == 2);
    CHECK(back[0].model_tag == "xlstm");  // sorted first
    CHECK(back[1].model_tag == "baseline");
    auto bitwise = [](double u, double v) { return std::memcmp(&u, &v, 8) == 0; };
    CHECK(bitwise(back[0].mse, x.mse));
    CHECK(bitwise(back[0].rmse, x.rmse));
    CHECK(bitwise(back[0].mae, x.mae));
    CHECK(bitwise(back[0].maxae, x.maxae));
    CHECK(bitwise(back[1].mse, base.mse));
    CHECK(bitwise(back[1].maxae, base.maxae));

    const std::string text = metrics_text(rows);
    CHECK(text.find("6.28e-06") != std::string::npos);
    CHECK(text.find("3.33e-01") != std::string::npos);
    CHECK(text.find("xlstm") < text.find("baseline"));

    CHECK(metrics_csv({}) == std::string(kMetricsHeader) + "\n");
    CHECK(parse_metrics_csv(metrics_csv({})).empty());
    CHECK_THROWS_AS(parse_metrics_csv("bogus\n1,2\n"), ConfigError);

    // grouping: problems keep first-appearance order, models sort within
    std::vector<MetricRecord> multi{{"b-prob", "baseline", "g", 1, 1, 1, 1},
                                    {"a-prob", "baseline", "g", 2, 1, 1, 1},
                                    {"b-prob", "xlstm", "g", 3, 1, 1, 1},
                                    {"a-prob", "xlstm", "g", 4, 1, 1, 1}};
    const auto ordered = table_order(multi);
    CHECK(ordered[0].problem == "b-prob");
    CHECK(ordered[0].model_tag == "xlstm");
    CHECK(ordered[1].model_tag == "baseline");
    CHECK(ordered[2].problem == "a-prob");
    CHECK(ordered[2].model_tag == "xlstm");
}

TEST_CASE("spectral csv is lossless") {
    const FrequencyReport rep = toy_report(false);
    const std::string csv = spectral_csv(rep, "probe config");
    CHECK(csv == spectral_csv(rep, "probe config"));
    const auto bands = parse_spectral_csv(csv);
    REQUIRE(bands.size() == rep.bands.size());
    for (std::size_t i = 0; i < bands.size(); ++i) {
        CHECK(bands[i].k == rep.bands[i].k);
        CHECK(std::memcmp(&bands[i].mean_err_x, &rep.bands[i].mean_err_x, 8) == 0);
        CHECK(std::memcmp(&bands[i].sd_gain, &rep.bands[i].sd_gain, 8) == 0);
        CHECK(std::memcmp(&bands[i].mean_tau_base, &rep.bands[i].mean_tau_base, 8) == 0);
        CHECK(bands[i].censored_base == rep.bands[i].censored_base);
    }
    CHECK(csv.find("kstar_x=6") != std::string::npos);
}

TEST_CASE("loss plots are deterministic and draw degenerate histories honestly") {
    std::vector<LossBreakdown> flat(50), zero(10);
    for (int i = 0; i < 50; ++i) {
        flat[i].iteration = i;
        flat[i].total = 0.25;
    }
    for (int i = 0; i < 10; ++i) {
        zero[i].iteration = i;
        zero[i].total = 0.0;
    }

    const std::string svg = loss_svg({{"xlstm", &flat}});
    CHECK(svg == loss_svg({{"xlstm", &flat}}));

    // constant loss draws as one horizontal line in the linear panel
    const auto pts = parse_points(svg_attr(svg, "loss-linear-xlstm", "points"));
    REQUIRE(pts.size() == 50);
    for (const auto& [x, y] : pts) CHECK(y == pts[0].second);
    CHECK(pts.front().first < pts.back().first);

    // zero loss stays finite in the log panel thanks to the display floor
    const std::string zsvg = loss_svg({{"baseline", &zero}});
    CHECK(zsvg.find("nan") == std::string::npos);
    CHECK(zsvg.find("inf") == std::string::npos);
    const auto zpts = parse_points(svg_attr(zsvg, "loss-log-baseline", "points"));
    REQUIRE(zpts.size() == 10);
    for (const auto& [x, y] : zpts) CHECK(std::isfinite(y));

    // long histories are strided down but keep the last point
    std::vector<LossBreakdown> lng(25000);
    for (int i = 0; i < 25000; ++i) {
        lng[static_cast<std::size_t>(i)].iteration = i;
        lng[static_cast<std::size_t>(i)].total = 1.0 / (1.0 + i);
    }
    const std::string lsvg = loss_svg({{"xlstm", &lng}});
    const auto lpts = parse_points(svg_attr(lsvg, "loss-linear-xlstm", "points"));
    CHECK(lpts.size() <= 2101);
    CHECK(lpts.size() >= 2000);
}

TEST_CASE("field plots embed three rasters and mask outside the disk") {
    const auto disk = make_disk(1.0);
    const Eigen::ArrayXd ref = reference_on_grid(disk);
    Eigen::ArrayXd pred = ref + 0.01;

    const std::string svg = fields_svg(disk, ref, pred);
    CHECK(svg == fields_svg(disk, ref, pred));
    std::size_t images = 0, at = 0;
    while ((at = svg.find("<image", at)) != std::string::npos) {
        ++images;
        at += 6;
    }
    CHECK(images == 3);
    CHECK(svg.find("reference") != std::string::npos);
    CHECK(svg.find("prediction") != std::string::npos);
    CHECK(svg.find("absolute error") != std::string::npos);

    // decode the first embedded png: corners transparent, center opaque hot
    int w = 0, h = 0;
    const std::string png =
        detail::field_png(disk, ref, ref.minCoeff(), ref.maxCoeff(), &w, &h);
    const auto rgba = decode_png_rgba(png, w, h);
    REQUIRE(w == 512);
    REQUIRE(h == 512);
    auto px = [&rgba, w](int x, int y) {
        return &rgba[(static_cast<std::size_t>(y) * w + x) * 4];
    };
    CHECK(px(0, 0)[3] == 0);
    CHECK(px(511, 0)[3] == 0);
    CHECK(px(0, 511)[3] == 0);
    CHECK(px(511, 511)[3] == 0);
    const auto* center = px(256, 256);
    CHECK(center[3] == 255);
    // center of the disk is the field maximum, top of the color ramp
    CHECK(std::abs(center[0] - 253) <= 2);
    CHECK(std::abs(center[1] - 231) <= 2);
    CHECK(std::abs(center[2] - 37) <= 2);

    // box domains: aspect follows the bounding box, no mask anywhere
    const auto adv = make_advection();
    const Eigen::ArrayXd aref = reference_on_grid(adv);
    const std::string apng = detail::field_png(adv, aref, aref.minCoeff(), aref.maxCoeff(), &w, &h);
    const auto argba = decode_png_rgba(apng, w, h);
    REQUIRE(w == 512);
    REQUIRE(h == 256);
    for (const int x : {0, 255, 511})
        for (const int y : {0, 128, 255})
            CHECK(argba[(static_cast<std::size_t>(y) * 512 + x) * 4 + 3] == 255);

    CHECK_THROWS_AS(fields_svg(disk, ref, Eigen::ArrayXd::Zero(3)), StructuralError);
}

TEST_CASE("spectrum plots mark k-star and an equal pair draws unit gain flat") {
    const FrequencyReport rep = toy_report(false);
    const std::string svg = spectrum_svg(rep, "probe");
    CHECK(svg == spectrum_svg(rep, "probe"));
    CHECK(svg.find("k* gated") != std::string::npos);
    CHECK(svg.find("k* base") != std::string::npos);
    CHECK_FALSE(svg_attr(svg, "err-xlstm", "points").empty());
    CHECK_FALSE(svg_attr(svg, "err-baseline", "points").empty());
    CHECK_FALSE(svg_attr(svg, "tau-baseline", "points").empty());

    // identical models: the gain curve is exactly flat at one
    const FrequencyReport eq = toy_report(true);
    const std::string esvg = spectrum_svg(eq);
    const auto gain = parse_points(svg_attr(esvg, "gain", "points"));
    REQUIRE(gain.size() == eq.bands.size());
    for (const auto& [x, y] : gain) CHECK(y == gain[0].second);

    // bands with no surviving seeds are skipped, not drawn as zeros
    FrequencyReport holey = toy_report(false);
    holey.bands[3].used = 0;
    const auto hpts = parse_points(svg_attr(spectrum_svg(holey), "err-xlstm", "points"));
    CHECK(hpts.size() == holey.bands.size() - 1);
}

TEST_CASE("paired artifacts land in the documented layout") {
    const fs::path root = fresh_dir("pinn_artifacts");
    const auto spec = trimmed(make_advection(), {20, 4, 4});
    TrainConfig tc;
    tc.model.width = 8;
    tc.model.depth = 1;
    tc.model.micro_steps = 1;
    tc.budget = 3;
    tc.seed = 9;

    const PairedRuns pair = train_pair(spec, tc);
    const auto rows = write_pair_artifacts(root, spec, pair, "snapshot");

    for (const char* model : {"xlstm", "baseline"}) {
        const RunPaths p = run_paths(root, spec.name, model);
        for (const fs::path* f :
             {&p.metrics_csv, &p.history_json, &p.fields_svg, &p.loss_svg, &p.params}) {
            INFO(*f);
            CHECK(fs::exists(*f));
        }
    }
    CHECK(fs::exists(root / "runs" / "advection1d" / "metrics.csv"));
    CHECK(fs::exists(root / "runs" / "advection1d" / "loss.svg"));

    // combined table: two rows, gated first, matching what the writer returned
    std::ifstream in(root / "runs" / "advection1d" / "metrics.csv");
    std::string csv((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto parsed = parse_metrics_csv(csv);
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].model_tag == "xlstm");
    CHECK(parsed[1].model_tag == "baseline");
    REQUIRE(rows.size() == 2);
    CHECK(parsed[0].mse == rows[0].mse);
    CHECK(csv.find("# snapshot") == 0);

    // per-model round trips reproduce the run exactly
    const RunPaths px = run_paths(root, spec.name, "xlstm");
    const RunRecord hist = load_history(px.history_json);
    REQUIRE(hist.history.size() == pair.xlstm.history.size());
    CHECK(hist.history.back().total == pair.xlstm.history.back().total);
    CHECK(hist.set_fingerprint == pair.xlstm.set_fingerprint);
    const Checkpoint ck = load_checkpoint(px.params);
    CHECK((ck.array("theta").array() == pair.xlstm.theta.array()).all());

    // metrics rows agree with recomputing from the checkpoint
    const ParamLayout lay = ParamLayout::build(ck.model);
    const MetricRecord again = validation_metrics(spec, ck.model, lay, ck.array("theta"), "xlstm");
    CHECK(again.mse == rows[0].mse);
    CHECK(again.grid == "201x101");
}

TEST_CASE("spectral artifacts land in the documented layout") {
    const fs::path root = fresh_dir("pinn_spectral_artifacts");
    const FrequencyReport rep = toy_report(false);
    write_spectral_artifacts(root, rep, "probe snapshot");
    CHECK(fs::exists(root / "spectral" / "report.csv"));
    CHECK(fs::exists(root / "spectral" / "spectrum.svg"));

    std::ifstream in(root / "spectral" / "report.csv");
    const std::string csv((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    const auto bands = parse_spectral_csv(csv);
    REQUIRE(bands.size() == rep.bands.size());
    CHECK(std::memcmp(&bands[5].mean_err_base, &rep.bands[5].mean_err_base, 8) == 0);
}
