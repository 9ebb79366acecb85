#include "glamap/uncertainty.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "glamap/io/csv.hpp"
#include "glamap/io/plot.hpp"
#include "glamap/random.hpp"

namespace glamap::uq {

using nlohmann::json;

double ConfidenceRaster::mean() const {
    double s = 0;
    for (double v : values.raw()) s += v;
    return values.size() ? s / static_cast<double>(values.size()) : 0.0;
}

double confidence_value(const double* p, int num_classes) {
    const double inv_log_c = 1.0 / std::log(static_cast<double>(num_classes));
    double s = 0;
    for (int i = 0; i < num_classes; ++i)
        if (p[i] > 0) s += p[i] * std::log(p[i]) * inv_log_c;
    return std::clamp(1.0 + s, 0.0, 1.0);
}

ConfidenceRaster confidence(const ProbabilityRaster& probs) {
    const int c = probs.num_classes();
    const int h = probs.rows(), w = probs.cols();
    const int64_t hw = static_cast<int64_t>(h) * w;
    ConfidenceRaster out;
    out.values = Grid<double>(h, w, 0.0);
    std::vector<double> px(c);
    for (int64_t i = 0; i < hw; ++i) {
        double sum = 0;
        for (int ci = 0; ci < c; ++ci) {
            px[ci] = probs.probs[ci * hw + i];
            sum += px[ci];
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw std::invalid_argument("confidence: unnormalized probabilities");
        out.values.raw()[i] = confidence_value(px.data(), c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// calibration
// ---------------------------------------------------------------------------

namespace {

struct BinStats {
    std::vector<double> mean_conf, accuracy, fraction, center;
};

BinStats binned(const std::vector<double>& conf, const std::vector<uint8_t>& correct,
                int bins) {
    if (conf.empty()) throw std::invalid_argument("calibration: empty input");
    if (conf.size() != correct.size())
        throw std::invalid_argument("calibration: conf/correct length mismatch");
    if (bins < 2) throw std::invalid_argument("calibration: need at least 2 bins");
    std::vector<double> sum_conf(bins, 0.0), sum_corr(bins, 0.0);
    std::vector<int64_t> count(bins, 0);
    for (size_t i = 0; i < conf.size(); ++i) {
        if (conf[i] < 0.0 || conf[i] > 1.0)
            throw std::invalid_argument("calibration: confidence outside [0,1]");
        const int b = std::min(bins - 1, static_cast<int>(conf[i] * bins));
        sum_conf[b] += conf[i];
        sum_corr[b] += correct[i] ? 1.0 : 0.0;
        ++count[b];
    }
    BinStats st;
    for (int b = 0; b < bins; ++b) {
        if (!count[b]) continue;
        st.mean_conf.push_back(sum_conf[b] / count[b]);
        st.accuracy.push_back(sum_corr[b] / count[b]);
        st.fraction.push_back(static_cast<double>(count[b]) / conf.size());
        st.center.push_back((b + 0.5) / bins);
    }
    return st;
}

double rbf(double a, double b, double bandwidth) {
    const double d = a - b;
    return std::exp(-d * d / (2.0 * bandwidth * bandwidth));
}

// Pool-adjacent-violators over (x ascending, y) pairs.
std::vector<double> pava(const std::vector<double>& y) {
    std::vector<double> out = y;
    std::vector<double> weight(y.size(), 1.0);
    std::vector<size_t> len(y.size(), 1);
    size_t n = 0;
    for (size_t i = 0; i < y.size(); ++i) {
        out[n] = y[i];
        weight[n] = 1.0;
        len[n] = 1;
        ++n;
        while (n > 1 && out[n - 2] > out[n - 1]) {
            const double w = weight[n - 2] + weight[n - 1];
            out[n - 2] = (out[n - 2] * weight[n - 2] + out[n - 1] * weight[n - 1]) / w;
            weight[n - 2] = w;
            len[n - 2] += len[n - 1];
            --n;
        }
    }
    std::vector<double> expanded;
    for (size_t b = 0; b < n; ++b)
        for (size_t k = 0; k < len[b]; ++k) expanded.push_back(out[b]);
    return expanded;
}

}  // namespace

Calibrator fit_calibrator(const std::vector<double>& conf, const std::vector<uint8_t>& correct,
                          int bins, double bandwidth, double ridge, bool isotonic) {
    BinStats st = binned(conf, correct, bins);
    const int n = static_cast<int>(st.mean_conf.size());
    if (n < 2)
        throw std::runtime_error(
            "fit_calibrator: all predictions fall in one confidence bin; provide more varied "
            "data");

    Calibrator cal;
    cal.bin_conf_ = st.mean_conf;
    cal.bin_acc_ = st.accuracy;
    cal.bandwidth_ = bandwidth;
    cal.ridge_ = ridge;

    double mean_y = 0;
    for (double a : st.accuracy) mean_y += a;
    mean_y /= n;
    cal.intercept_ = mean_y;

    Eigen::MatrixXd k(n, n);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        y[i] = st.accuracy[i] - mean_y;
        for (int j = 0; j < n; ++j) k(i, j) = rbf(st.mean_conf[i], st.mean_conf[j], bandwidth);
        k(i, i) += ridge;
    }
    Eigen::VectorXd alpha = k.ldlt().solve(y);
    cal.alphas_.assign(alpha.data(), alpha.data() + n);

    if (isotonic) {
        cal.isotonic_ = true;
        const int grid_n = 201;
        cal.iso_x_.resize(grid_n);
        std::vector<double> raw(grid_n);
        for (int i = 0; i < grid_n; ++i) {
            cal.iso_x_[i] = static_cast<double>(i) / (grid_n - 1);
            double v = cal.intercept_;
            for (int j = 0; j < n; ++j)
                v += cal.alphas_[j] * rbf(cal.iso_x_[i], cal.bin_conf_[j], bandwidth);
            raw[i] = std::clamp(v, 0.0, 1.0);
        }
        cal.iso_y_ = pava(raw);
    }
    return cal;
}

double Calibrator::apply(double conf) const {
    if (isotonic_) {
        const double x = std::clamp(conf, 0.0, 1.0);
        const double fx = x * (iso_x_.size() - 1);
        const int i0 = std::min(static_cast<int>(fx), static_cast<int>(iso_x_.size()) - 2);
        const double f = fx - i0;
        return std::clamp((1 - f) * iso_y_[i0] + f * iso_y_[i0 + 1], 0.0, 1.0);
    }
    double v = intercept_;
    for (size_t j = 0; j < alphas_.size(); ++j)
        v += alphas_[j] * rbf(conf, bin_conf_[j], bandwidth_);
    return std::clamp(v, 0.0, 1.0);
}

ConfidenceRaster Calibrator::apply(const ConfidenceRaster& raw) const {
    ConfidenceRaster out;
    out.values = Grid<double>(raw.values.rows(), raw.values.cols(), 0.0);
    for (size_t i = 0; i < raw.values.size(); ++i)
        out.values.raw()[i] = apply(raw.values.raw()[i]);
    out.calibrated = true;
    return out;
}

void Calibrator::save(const std::string& path) const {
    json j;
    j["bins"] = json::array();
    for (size_t i = 0; i < bin_conf_.size(); ++i)
        j["bins"].push_back({bin_conf_[i], bin_acc_[i]});
    j["bandwidth"] = bandwidth_;
    j["ridge"] = ridge_;
    j["intercept"] = intercept_;
    j["alphas"] = alphas_;
    j["isotonic"] = isotonic_;
    if (isotonic_) {
        j["iso_x"] = iso_x_;
        j["iso_y"] = iso_y_;
    }
    std::ofstream f(path);
    if (!f) throw std::runtime_error("Calibrator::save: cannot write " + path);
    f << j.dump(2) << "\n";
}

Calibrator Calibrator::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("Calibrator::load: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("Calibrator::load: parse error in " + path + ": " + e.what());
    }
    Calibrator cal;
    for (const auto& pair : j.at("bins")) {
        cal.bin_conf_.push_back(pair[0].get<double>());
        cal.bin_acc_.push_back(pair[1].get<double>());
    }
    cal.bandwidth_ = j.at("bandwidth").get<double>();
    cal.ridge_ = j.at("ridge").get<double>();
    cal.intercept_ = j.at("intercept").get<double>();
    cal.alphas_ = j.at("alphas").get<std::vector<double>>();
    cal.isotonic_ = j.value("isotonic", false);
    if (cal.isotonic_) {
        cal.iso_x_ = j.at("iso_x").get<std::vector<double>>();
        cal.iso_y_ = j.at("iso_y").get<std::vector<double>>();
    }
    return cal;
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

double ece(const std::vector<double>& conf, const std::vector<uint8_t>& correct, int bins) {
    BinStats st = binned(conf, correct, bins);
    double e = 0;
    for (size_t b = 0; b < st.mean_conf.size(); ++b)
        e += st.fraction[b] * std::abs(st.accuracy[b] - st.mean_conf[b]);
    return e;
}

std::vector<ReliabilityRow> reliability_data(const std::vector<double>& conf,
                                             const std::vector<uint8_t>& correct, int bins) {
    BinStats st = binned(conf, correct, bins);
    std::vector<ReliabilityRow> rows;
    for (size_t b = 0; b < st.mean_conf.size(); ++b)
        rows.push_back({st.center[b], st.mean_conf[b], st.accuracy[b], st.fraction[b]});
    return rows;
}

void write_reliability_csv(const std::string& path, const std::vector<ReliabilityRow>& rows) {
    io::CsvWriter csv(path, {"bin_center", "mean_conf", "accuracy", "fraction"});
    for (const auto& r : rows)
        csv.row({io::CsvWriter::num(r.bin_center, 10), io::CsvWriter::num(r.mean_conf, 10),
                 io::CsvWriter::num(r.accuracy, 10), io::CsvWriter::num(r.fraction, 10)});
}

void write_reliability_png(const std::string& path, const std::vector<ReliabilityRow>& rows) {
    std::vector<double> mc, acc, frac;
    for (const auto& r : rows) {
        mc.push_back(r.mean_conf);
        acc.push_back(r.accuracy);
        frac.push_back(r.fraction);
    }
    io::plot_reliability_png(path, mc, acc, frac);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("pearson: length mismatch");
    if (a.size() < 3) throw std::invalid_argument("pearson: need at least 3 points");
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("pearson: zero-variance input");
    return sab / std::sqrt(saa * sbb);
}

CorrelationResult compare_confidences(const std::vector<double>& a,
                                      const std::vector<double>& b, int n_boot,
                                      uint64_t seed) {
    const double r = pearson(a, b);
    if (n_boot < 1) return {r, r, r};
    Rng rng(seed);
    const size_t n = a.size();
    std::vector<double> rs;
    rs.reserve(n_boot);
    std::vector<double> ra(n), rb(n);
    for (int k = 0; k < n_boot; ++k) {
        for (size_t i = 0; i < n; ++i) {
            const size_t j = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(n) - 1));
            ra[i] = a[j];
            rb[i] = b[j];
        }
        try {
            rs.push_back(pearson(ra, rb));
        } catch (const std::invalid_argument&) {
            // degenerate resample (constant values); skip it
        }
    }
    if (rs.empty()) return {r, r, r};
    std::sort(rs.begin(), rs.end());
    auto percentile = [&rs](double q) {
        const double idx = q * (rs.size() - 1);
        const size_t i0 = static_cast<size_t>(idx);
        const size_t i1 = std::min(i0 + 1, rs.size() - 1);
        const double f = idx - i0;
        return (1 - f) * rs[i0] + f * rs[i1];
    };
    return {r, percentile(0.025), percentile(0.975)};
}

}  // namespace glamap::uq
