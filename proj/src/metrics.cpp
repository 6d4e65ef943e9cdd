#include "docbin/metrics.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace docbin {

namespace {

void require_same_size(const BinaryImage& a, const BinaryImage& b) {
    if (a.width != b.width || a.height != b.height) {
        throw std::invalid_argument("image sizes differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                                    " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
    }
}

double harmonic(double p, double r) { return p + r > 0 ? 100.0 * 2.0 * p * r / (p + r) : 0.0; }

// Neighbour code bit k holds P(k+2): P2=N, P3=NE, P4=E, P5=SE, P6=S, P7=SW, P8=W, P9=NW.
struct ZhangSuenTables {
    std::array<std::uint8_t, 256> first{};
    std::array<std::uint8_t, 256> second{};

    ZhangSuenTables() {
        for (int code = 0; code < 256; ++code) {
            auto p = [code](int i) { return (code >> (i - 2)) & 1; };
            const int b = std::popcount(unsigned(code));
            int a = 0;
            for (int i = 2; i <= 9; ++i) a += p(i) == 0 && p(i == 9 ? 2 : i + 1) == 1;
            const bool base = b >= 2 && b <= 6 && a == 1;
            first[std::size_t(code)] = base && p(2) * p(4) * p(6) == 0 && p(4) * p(6) * p(8) == 0;
            second[std::size_t(code)] = base && p(2) * p(4) * p(8) == 0 && p(2) * p(6) * p(8) == 0;
        }
    }
};

const ZhangSuenTables& zs_tables() {
    static const ZhangSuenTables t;
    return t;
}

int neighbour_code(const BinaryImage& img, int x, int y) {
    static constexpr int dx[] = {0, 1, 1, 1, 0, -1, -1, -1};
    static constexpr int dy[] = {-1, -1, 0, 1, 1, 1, 0, -1};
    int code = 0;
    for (int k = 0; k < 8; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx >= 0 && ny >= 0 && nx < img.width && ny < img.height && img.at(nx, ny)) code |= 1 << k;
    }
    return code;
}

// 8-connected component labels (0 = background), returns component count.
int label_components(const BinaryImage& img, std::vector<int>& labels) {
    labels.assign(img.size(), 0);
    int next = 0;
    std::vector<std::pair<int, int>> stack;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (!img.at(x, y) || labels[std::size_t(y) * std::size_t(img.width) + std::size_t(x)]) continue;
            ++next;
            stack.emplace_back(x, y);
            labels[std::size_t(y) * std::size_t(img.width) + std::size_t(x)] = next;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = cx + dx, ny = cy + dy;
                        if (nx < 0 || ny < 0 || nx >= img.width || ny >= img.height || !img.at(nx, ny)) continue;
                        auto& l = labels[std::size_t(ny) * std::size_t(img.width) + std::size_t(nx)];
                        if (l) continue;
                        l = next;
                        stack.emplace_back(nx, ny);
                    }
            }
        }
    }
    return next;
}

}  // namespace

Confusion confusion(const BinaryImage& pred, const BinaryImage& gt) {
    require_same_size(pred, gt);
    Confusion c;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double f_measure(const Confusion& c) {
    if (c.tp == 0) return 0.0;
    const double p = double(c.tp) / double(c.tp + c.fp);
    const double r = double(c.tp) / double(c.tp + c.fn);
    return harmonic(p, r);
}

BinaryImage skeletonize(const BinaryImage& img) {
    const auto& lut = zs_tables();
    BinaryImage cur = img;
    for (auto& b : cur.bits) b = b ? 1 : 0;
    std::vector<std::size_t> doomed;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            const auto& table = pass == 0 ? lut.first : lut.second;
            doomed.clear();
            for (int y = 0; y < cur.height; ++y)
                for (int x = 0; x < cur.width; ++x)
                    if (cur.at(x, y) && table[std::size_t(neighbour_code(cur, x, y))])
                        doomed.push_back(std::size_t(y) * std::size_t(cur.width) + std::size_t(x));
            for (auto i : doomed) cur.bits[i] = 0;
            changed = changed || !doomed.empty();
        }
    }

    std::vector<int> labels;
    const int n = label_components(img, labels);
    std::vector<char> kept(std::size_t(n) + 1, 0);
    for (std::size_t i = 0; i < cur.size(); ++i)
        if (cur.bits[i]) kept[std::size_t(labels[i])] = 1;
    for (std::size_t i = 0; i < cur.size(); ++i) {
        const auto l = std::size_t(labels[i]);
        if (l && !kept[l]) {
            cur.bits[i] = 1;
            kept[l] = 1;
        }
    }
    return cur;
}

double pseudo_f_measure(const BinaryImage& pred, const BinaryImage& gt) {
    require_same_size(pred, gt);
    const auto skel = skeletonize(gt);
    std::int64_t skel_total = 0, skel_hit = 0, tp = 0, fp = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool p = pred.bits[i] != 0;
        if (skel.bits[i]) {
            ++skel_total;
            skel_hit += p;
        }
        if (p) (gt.bits[i] ? tp : fp)++;
    }
    if (tp == 0 || skel_total == 0) return 0.0;
    return harmonic(double(tp) / double(tp + fp), double(skel_hit) / double(skel_total));
}

double psnr(const BinaryImage& pred, const BinaryImage& gt) {
    require_same_size(pred, gt);
    std::int64_t diff = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) diff += (pred.bits[i] != 0) != (gt.bits[i] != 0);
    if (diff == 0) return std::numeric_limits<double>::infinity();
    const double mse = double(diff) / double(gt.size());
    return 10.0 * std::log10(1.0 / mse);
}

std::int64_t nubn(const BinaryImage& gt, int block) {
    std::int64_t count = 0;
    for (int by = 0; by < gt.height; by += block) {
        for (int bx = 0; bx < gt.width; bx += block) {
            bool ink = false, bg = false;
            for (int y = by; y < std::min(by + block, gt.height); ++y)
                for (int x = bx; x < std::min(bx + block, gt.width); ++x) (gt.at(x, y) ? ink : bg) = true;
            count += ink && bg;
        }
    }
    return count;
}

const DrdWeights& drd_weights() {
    static const DrdWeights w = [] {
        DrdWeights m{};
        double total = 0;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) {
                if (i == 2 && j == 2) continue;
                m[std::size_t(i)][std::size_t(j)] = 1.0 / std::sqrt(double((i - 2) * (i - 2) + (j - 2) * (j - 2)));
                total += m[std::size_t(i)][std::size_t(j)];
            }
        for (auto& row : m)
            for (auto& v : row) v /= total;
        return m;
    }();
    return w;
}

double drd(const BinaryImage& pred, const BinaryImage& gt) {
    require_same_size(pred, gt);
    const auto& w = drd_weights();
    double total = 0;
    bool any = false;
    for (int y = 0; y < gt.height; ++y) {
        for (int x = 0; x < gt.width; ++x) {
            const int p = pred.at(x, y) ? 1 : 0;
            if (p == (gt.at(x, y) ? 1 : 0)) continue;
            any = true;
            double dk = 0;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= gt.width || ny >= gt.height) continue;
                    if ((gt.at(nx, ny) ? 1 : 0) != p) dk += w[std::size_t(dy + 2)][std::size_t(dx + 2)];
                }
            total += dk;
        }
    }
    if (!any) return 0.0;
    const auto blocks = nubn(gt);
    if (blocks == 0) return std::numeric_limits<double>::infinity();
    return total / double(blocks);
}

MetricsReport evaluate(const BinaryImage& pred, const BinaryImage& gt) {
    return {f_measure(confusion(pred, gt)), pseudo_f_measure(pred, gt), psnr(pred, gt), drd(pred, gt)};
}

DatasetScore aggregate(const std::vector<MetricsReport>& reports) {
    DatasetScore s;
    s.images = reports.size();
    if (reports.empty()) return s;
    std::size_t finite_psnr = 0;
    for (const auto& r : reports) {
        s.mean.f_measure += r.f_measure;
        s.mean.f_ps += r.f_ps;
        s.mean.drd += r.drd;
        if (std::isinf(r.psnr)) {
            ++s.psnr_infinite;
        } else {
            s.mean.psnr += r.psnr;
            ++finite_psnr;
        }
    }
    const double n = double(reports.size());
    s.mean.f_measure /= n;
    s.mean.f_ps /= n;
    s.mean.drd /= n;
    s.mean.psnr = finite_psnr ? s.mean.psnr / double(finite_psnr) : std::numeric_limits<double>::infinity();
    return s;
}

nlohmann::json metric_json(double v) {
    if (std::isinf(v)) return "inf";
    return v;
}

nlohmann::json to_json(const MetricsReport& r) {
    return {{"f_measure", metric_json(r.f_measure)},
            {"f_ps", metric_json(r.f_ps)},
            {"psnr", metric_json(r.psnr)},
            {"drd", metric_json(r.drd)}};
}

}  // namespace docbin
