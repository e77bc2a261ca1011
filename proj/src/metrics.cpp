#include "lumidiff/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"

#include "binary_io.hpp"
#include "lumidiff/error.hpp"

namespace lumidiff::metrics {

double psnr(const Image& a, const Image& b) {
    require_same_shape(a.tensor(), b.tensor(), "psnr");
    double se = 0.0;
    const auto& x = a.tensor().values();
    const auto& y = b.tensor().values();
    for (std::size_t i = 0; i < x.size(); ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
    const double mse = se / static_cast<double>(x.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b, const losses::SsimParams& p) {
    require_same_shape(a.tensor(), b.tensor(), "ssim");
    return losses::ssim(a.tensor(), b.tensor(), p);
}

namespace {

// nearest sampling of max-channel lightness
std::vector<double> lightness_grid(const Image& img, int gh, int gw) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(gh) * gw);
    for (int i = 0; i < gh; ++i) {
        const int y = std::min(img.height() - 1, static_cast<int>((i + 0.5) * img.height() / gh));
        for (int j = 0; j < gw; ++j) {
            const int x = std::min(img.width() - 1, static_cast<int>((j + 0.5) * img.width() / gw));
            double m = img(0, y, x);
            for (int c = 1; c < img.channels(); ++c) m = std::max(m, img(c, y, x));
            out.push_back(m);
        }
    }
    return out;
}

}  // namespace

double loe(const Image& enhanced, const Image& original, int size) {
    require_same_shape(enhanced.tensor(), original.tensor(), "loe");
    if (size < 1) throw ConfigError("LOE sample size must be >= 1");
    const int gh = std::min(size, enhanced.height());
    const int gw = std::min(size, enhanced.width());
    const auto le = lightness_grid(enhanced, gh, gw);
    const auto lo = lightness_grid(original, gh, gw);
    const std::size_t n = le.size();
    std::uint64_t flips = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) flips += (le[i] >= le[j]) != (lo[i] >= lo[j]);
    return 1000.0 * static_cast<double>(flips) / (static_cast<double>(n) * static_cast<double>(n));
}

// ---- NIQE ----------------------------------------------------------------

namespace {

constexpr char kNiqeMagic[8] = {'L', 'M', 'D', 'F', 'N', 'I', 'Q', 'E'};
constexpr std::uint32_t kNiqeVersion = 1;

struct GammaTable {
    std::vector<double> shape;
    std::vector<double> aggd_ratio;  // G(2/a)^2 / (G(1/a) G(3/a))
};

const GammaTable& gamma_table() {
    static const GammaTable table = [] {
        GammaTable t;
        for (int i = 0; i <= 9800; ++i) {
            const double a = 0.2 + 0.001 * i;
            const double g1 = std::tgamma(1.0 / a);
            const double g2 = std::tgamma(2.0 / a);
            const double g3 = std::tgamma(3.0 / a);
            t.shape.push_back(a);
            t.aggd_ratio.push_back(g2 * g2 / (g1 * g3));
        }
        return t;
    }();
    return table;
}

std::size_t argmin_abs(const std::vector<double>& v, double target) {
    std::size_t best = 0;
    double err = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double e = std::abs(v[i] - target);
        if (e < err) {
            err = e;
            best = i;
        }
    }
    return best;
}

struct Aggd {
    double alpha;
    double beta_left;
    double beta_right;
};

Aggd fit_aggd(const std::vector<double>& x) {
    double left_sq = 0.0, right_sq = 0.0, abs_sum = 0.0, sq = 0.0;
    std::size_t nl = 0, nr = 0;
    for (double v : x) {
        if (v < 0) {
            left_sq += v * v;
            ++nl;
        } else if (v > 0) {
            right_sq += v * v;
            ++nr;
        }
        abs_sum += std::abs(v);
        sq += v * v;
    }
    const double n = static_cast<double>(x.size());
    const double left_std = nl ? std::sqrt(left_sq / nl) : 0.0;
    const double right_std = nr ? std::sqrt(right_sq / nr) : 0.0;
    const double gamma_hat = left_std / right_std;
    const double r_hat = (abs_sum / n) * (abs_sum / n) / (sq / n);
    const double r_norm = r_hat * (gamma_hat * gamma_hat * gamma_hat + 1) * (gamma_hat + 1) /
                          ((gamma_hat * gamma_hat + 1) * (gamma_hat * gamma_hat + 1));
    const auto& t = gamma_table();
    const double alpha = t.shape[argmin_abs(t.aggd_ratio, r_norm)];
    const double k = std::sqrt(std::tgamma(1.0 / alpha) / std::tgamma(3.0 / alpha));
    return {alpha, left_std * k, right_std * k};
}

Tensor gaussian_blur_replicate(const Tensor& x, const std::vector<double>& taps) {
    const int r = static_cast<int>(taps.size()) / 2;
    const Shape s = x.shape();
    Tensor tmp(s), out(s);
    for (int c = 0; c < s.c; ++c) {
        for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx) {
                double acc = 0.0;
                for (int k = -r; k <= r; ++k) acc += taps[k + r] * x(c, y, std::clamp(xx + k, 0, s.w - 1));
                tmp(c, y, xx) = acc;
            }
        for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx) {
                double acc = 0.0;
                for (int k = -r; k <= r; ++k) acc += taps[k + r] * tmp(c, std::clamp(y + k, 0, s.h - 1), xx);
                out(c, y, xx) = acc;
            }
    }
    return out;
}

Tensor box_downsample2(const Tensor& x) {
    const Shape s = x.shape();
    Tensor out({s.c, s.h / 2, s.w / 2});
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h / 2; ++y)
            for (int xx = 0; xx < s.w / 2; ++xx)
                out(c, y, xx) = 0.25 * (x(c, 2 * y, 2 * xx) + x(c, 2 * y, 2 * xx + 1) + x(c, 2 * y + 1, 2 * xx) +
                                        x(c, 2 * y + 1, 2 * xx + 1));
    return out;
}

Tensor patch(const Tensor& x, int y0, int x0, int size) {
    Tensor p({1, size, size});
    for (int y = 0; y < size; ++y)
        for (int xx = 0; xx < size; ++xx) p(0, y, xx) = x(0, y0 + y, x0 + xx);
    return p;
}

bool finite_row(const std::vector<double>& f) {
    return std::all_of(f.begin(), f.end(), [](double v) { return std::isfinite(v); });
}

void mean_cov(const std::vector<std::vector<double>>& rows, std::vector<double>& mu, std::vector<double>& cov) {
    const std::size_t d = rows.front().size();
    const std::size_t n = rows.size();
    mu.assign(d, 0.0);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < d; ++i) mu[i] += r[i];
    for (double& m : mu) m /= static_cast<double>(n);
    cov.assign(d * d, 0.0);
    if (n < 2) return;
    for (const auto& r : rows)
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += (r[i] - mu[i]) * (r[j] - mu[j]);
    for (double& v : cov) v /= static_cast<double>(n - 1);
}

}  // namespace

void NiqeModel::validate() const {
    const std::size_t d = mu.size();
    if (d == 0 || cov.size() != d * d) throw FormatError("NIQE model dimensions are inconsistent");
    if (patch_size < 8 || patch_size % 2 != 0) throw FormatError("NIQE model patch size must be even and >= 8");
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (cov[i * d + j] != cov[j * d + i]) throw FormatError("NIQE covariance is not symmetric");
}

void NiqeModel::save(const std::filesystem::path& path) const {
    validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write NIQE model '" + path.string() + "'");
    os.write(kNiqeMagic, 8);
    detail::write_pod<std::uint32_t>(os, kNiqeVersion);
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(patch_size));
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(mu.size()));
    detail::write_doubles(os, mu.data(), mu.size());
    detail::write_doubles(os, cov.data(), cov.size());
    if (!os) throw IoError("failed writing NIQE model '" + path.string() + "'");
}

NiqeModel NiqeModel::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("NIQE model file '" + path.string() + "' not found or unreadable");
    char magic[8];
    if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kNiqeMagic))
        throw LoadError("'" + path.string() + "' is not a NIQE model");
    if (detail::read_pod<std::uint32_t>(is) != kNiqeVersion) throw LoadError("unsupported NIQE model version");
    NiqeModel m;
    m.patch_size = static_cast<int>(detail::read_pod<std::uint32_t>(is));
    const auto d = detail::read_pod<std::uint32_t>(is);
    if (d == 0 || d > 4096) throw LoadError("NIQE model dimension out of range");
    m.mu = detail::read_doubles(is, d);
    m.cov = detail::read_doubles(is, static_cast<std::size_t>(d) * d);
    m.validate();
    return m;
}

Tensor luma255(const Image& img) {
    Tensor out({1, img.height(), img.width()});
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            const double v = img.channels() == 3
                                 ? 0.299 * img(0, y, x) + 0.587 * img(1, y, x) + 0.114 * img(2, y, x)
                                 : img(0, y, x);
            out(0, y, x) = 255.0 * v;
        }
    return out;
}

Tensor mscn(const Tensor& gray, Tensor* local_sigma) {
    const auto taps = losses::gaussian_taps(7, 7.0 / 6.0);
    const Tensor mu = gaussian_blur_replicate(gray, taps);
    Tensor sq = gray;
    for (double& v : sq.values()) v *= v;
    const Tensor mu_sq = gaussian_blur_replicate(sq, taps);
    Tensor out(gray.shape());
    Tensor sigma(gray.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        sigma[i] = std::sqrt(std::abs(mu_sq[i] - mu[i] * mu[i]));
        out[i] = (gray[i] - mu[i]) / (sigma[i] + 1.0);
    }
    if (local_sigma) *local_sigma = std::move(sigma);
    return out;
}

std::vector<double> patch_features(const Tensor& p) {
    const Shape s = p.shape();
    std::vector<double> x(p.values().begin(), p.values().end());
    const Aggd base = fit_aggd(x);
    std::vector<double> f{base.alpha, 0.5 * (base.beta_left + base.beta_right)};
    // circular shifts (dy, dx): horizontal, vertical, main and anti diagonal
    constexpr int shifts[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    std::vector<double> prod(x.size());
    for (const auto& sh : shifts) {
        for (int y = 0; y < s.h; ++y)
            for (int xx = 0; xx < s.w; ++xx) {
                const int sy = ((y - sh[0]) % s.h + s.h) % s.h;
                const int sx = ((xx - sh[1]) % s.w + s.w) % s.w;
                prod[y * s.w + xx] = p(0, y, xx) * p(0, sy, sx);
            }
        const Aggd a = fit_aggd(prod);
        const double mean = (a.beta_right - a.beta_left) * std::tgamma(2.0 / a.alpha) / std::tgamma(1.0 / a.alpha);
        f.insert(f.end(), {a.alpha, mean, a.beta_left, a.beta_right});
    }
    return f;
}

std::vector<std::vector<double>> image_features(const Image& img, int patch_size, std::vector<double>* sharpness) {
    if (patch_size < 8 || patch_size % 2 != 0) throw ConfigError("NIQE patch size must be even and >= 8");
    if (img.height() < patch_size || img.width() < patch_size)
        throw ShapeError("NIQE needs images of at least " + std::to_string(patch_size) + "x" +
                         std::to_string(patch_size) + ", got " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()));
    const int rows = img.height() / patch_size;
    const int cols = img.width() / patch_size;
    Tensor gray = luma255(img);
    Tensor sigma;
    const Tensor fine = mscn(gray, &sigma);
    const Tensor coarse = mscn(box_downsample2(gray));
    const int half = patch_size / 2;
    std::vector<std::vector<double>> feats;
    if (sharpness) sharpness->clear();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            auto f = patch_features(patch(fine, r * patch_size, c * patch_size, patch_size));
            const auto g = patch_features(patch(coarse, r * half, c * half, half));
            f.insert(f.end(), g.begin(), g.end());
            feats.push_back(std::move(f));
            if (sharpness) {
                double acc = 0.0;
                for (int y = 0; y < patch_size; ++y)
                    for (int x = 0; x < patch_size; ++x) acc += sigma(0, r * patch_size + y, c * patch_size + x);
                sharpness->push_back(acc / (patch_size * patch_size));
            }
        }
    return feats;
}

double niqe(const Image& img, const NiqeModel& model) {
    model.validate();
    std::vector<std::vector<double>> feats;
    for (auto& f : image_features(img, model.patch_size))
        if (finite_row(f)) feats.push_back(std::move(f));
    if (feats.empty()) throw NumericError("NIQE: no patch produced finite features");
    const int d = model.dim();
    if (static_cast<int>(feats.front().size()) != d) throw FormatError("NIQE model dimension does not match features");
    std::vector<double> mu, cov;
    mean_cov(feats, mu, cov);
    Eigen::Map<const Eigen::MatrixXd> cp(model.cov.data(), d, d);
    Eigen::Map<const Eigen::MatrixXd> cd(cov.data(), d, d);
    const Eigen::MatrixXd pooled = 0.5 * (cp + cd);
    Eigen::VectorXd diff(d);
    for (int i = 0; i < d; ++i) diff[i] = model.mu[i] - mu[i];
    const Eigen::MatrixXd pinv = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(pooled).pseudoInverse();
    const double q = diff.dot(pinv * diff);
    return std::sqrt(std::max(q, 0.0));
}

NiqeModel fit_niqe(const std::vector<Image>& pristine, int patch_size, double sharpness_fraction) {
    if (pristine.empty()) throw DataError("fit_niqe needs at least one image");
    if (!(sharpness_fraction >= 0.0 && sharpness_fraction < 1.0))
        throw ConfigError("sharpness fraction must lie in [0, 1)");
    std::vector<std::vector<double>> kept;
    for (const auto& img : pristine) {
        std::vector<double> sharp;
        auto feats = image_features(img, patch_size, &sharp);
        const double top = *std::max_element(sharp.begin(), sharp.end());
        for (std::size_t i = 0; i < feats.size(); ++i)
            if (sharp[i] > sharpness_fraction * top && finite_row(feats[i])) kept.push_back(std::move(feats[i]));
    }
    if (kept.size() < 2) throw DataError("fit_niqe kept fewer than two patches");
    NiqeModel m;
    m.patch_size = patch_size;
    mean_cov(kept, m.mu, m.cov);
    // exact symmetry for the serialized model
    const int d = m.dim();
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) m.cov[j * d + i] = m.cov[i * d + j];
    return m;
}

// ---- directory evaluation ----------------------------------------------

namespace {

std::map<std::string, std::filesystem::path> image_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
    std::map<std::string, std::filesystem::path> out;
    for (const auto& p : list_images(dir, "*")) {
        std::string ext = p.extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.emplace(p.filename().string(), p);
    }
    return out;
}

void check_orphans(const std::map<std::string, std::filesystem::path>& a,
                   const std::map<std::string, std::filesystem::path>& b, const std::string& what) {
    std::vector<std::string> orphans;
    for (const auto& [name, _] : a)
        if (!b.count(name)) orphans.push_back(name);
    for (const auto& [name, _] : b)
        if (!a.count(name)) orphans.push_back(name);
    if (orphans.empty()) return;
    std::string msg = "filenames differ between enhanced and " + what + " directories:";
    for (const auto& o : orphans) msg += " " + o;
    throw DataError(msg);
}

std::optional<double> mean_of(const std::vector<ImageScores>& rows, std::optional<double> ImageScores::*field,
                              int* inf_count = nullptr) {
    double total = 0.0;
    int n = 0;
    bool any = false;
    for (const auto& r : rows) {
        if (!(r.*field)) continue;
        any = true;
        const double v = *(r.*field);
        if (std::isinf(v)) {
            if (inf_count) ++*inf_count;
            continue;
        }
        total += v;
        ++n;
    }
    if (!any) return std::nullopt;
    if (n == 0) return std::numeric_limits<double>::infinity();
    return total / n;
}

nlohmann::json number_or_inf(const std::optional<double>& v) {
    if (!v) return nullptr;
    if (std::isinf(*v)) return "inf";
    return *v;
}

std::string csv_cell(const std::optional<double>& v) {
    if (!v) return "";
    if (std::isinf(*v)) return "inf";
    std::ostringstream os;
    os << std::setprecision(10) << *v;
    return os.str();
}

}  // namespace

Report evaluate_pairs(const EvaluateOptions& opt) {
    const auto enhanced = image_files(opt.enhanced);
    if (enhanced.empty()) throw DataError("no images found in '" + opt.enhanced.string() + "'");
    std::optional<std::map<std::string, std::filesystem::path>> reference, originals;
    if (opt.reference) {
        reference = image_files(*opt.reference);
        check_orphans(enhanced, *reference, "reference");
    }
    if (opt.originals) {
        originals = image_files(*opt.originals);
        check_orphans(enhanced, *originals, "input");
    }
    Report report;
    report.config_hash = opt.config_hash;
    for (const auto& [name, path] : enhanced) {
        const Image e = load_image(path);
        ImageScores row;
        row.name = name;
        if (reference) {
            const Image r = load_image(reference->at(name));
            if (e.tensor().shape() != r.tensor().shape()) throw ShapeError("enhanced and reference differ in size for " + name);
            row.psnr = psnr(e, r);
            row.ssim = ssim(e, r);
        }
        if (opt.niqe_model) row.niqe = niqe(e, *opt.niqe_model);
        if (originals || reference) {
            const Image o = load_image(originals ? originals->at(name) : reference->at(name));
            row.loe = loe(e, o, opt.loe_size);
        }
        report.per_image.push_back(std::move(row));
    }
    report.means.psnr = mean_of(report.per_image, &ImageScores::psnr, &report.means.psnr_inf_count);
    report.means.ssim = mean_of(report.per_image, &ImageScores::ssim);
    report.means.niqe = mean_of(report.per_image, &ImageScores::niqe);
    report.means.loe = mean_of(report.per_image, &ImageScores::loe);
    return report;
}

std::string Report::to_json() const {
    nlohmann::json j;
    j["per_image"] = nlohmann::json::array();
    auto put = [](nlohmann::json& obj, const char* key, const std::optional<double>& v) {
        if (v) obj[key] = number_or_inf(v);
    };
    for (const auto& r : per_image) {
        nlohmann::json row;
        row["name"] = r.name;
        put(row, "psnr", r.psnr);
        put(row, "ssim", r.ssim);
        put(row, "niqe", r.niqe);
        put(row, "loe", r.loe);
        j["per_image"].push_back(std::move(row));
    }
    nlohmann::json m = nlohmann::json::object();
    put(m, "psnr", means.psnr);
    put(m, "ssim", means.ssim);
    put(m, "niqe", means.niqe);
    put(m, "loe", means.loe);
    if (means.psnr) m["psnr_inf_count"] = means.psnr_inf_count;
    j["means"] = std::move(m);
    j["config_hash"] = config_hash;
    return j.dump(2) + "\n";
}

std::string Report::to_csv() const {
    const bool has_psnr = means.psnr.has_value();
    const bool has_ssim = means.ssim.has_value();
    const bool has_niqe = means.niqe.has_value();
    const bool has_loe = means.loe.has_value();
    std::ostringstream os;
    os << "name";
    if (has_psnr) os << ",psnr";
    if (has_ssim) os << ",ssim";
    if (has_niqe) os << ",niqe";
    if (has_loe) os << ",loe";
    os << "\n";
    for (const auto& r : per_image) {
        os << r.name;
        if (has_psnr) os << "," << csv_cell(r.psnr);
        if (has_ssim) os << "," << csv_cell(r.ssim);
        if (has_niqe) os << "," << csv_cell(r.niqe);
        if (has_loe) os << "," << csv_cell(r.loe);
        os << "\n";
    }
    return os.str();
}

void Report::write(const std::filesystem::path& json_path, const std::filesystem::path& csv_path) const {
    for (const auto& [path, text] : {std::pair{json_path, to_json()}, std::pair{csv_path, to_csv()}}) {
        std::ofstream os(path);
        if (!os) throw IoError("cannot write report '" + path.string() + "'");
        os << text;
    }
}

}  // namespace lumidiff::metrics
