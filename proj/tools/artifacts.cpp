#include "artifacts.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ihanas::tools {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, r.ptr};
}

std::string generations_csv(const SearchResult& r) {
    std::ostringstream o;
    o << "generation,evaluations,best_val_loss,feasible,archive_size,hypervolume,refined\n";
    for (const auto& s : r.stats)
        o << s.generation << ',' << s.evaluations << ',' << num(s.best_val_loss) << ',' << s.feasible << ','
          << s.archive_size << ',' << num(s.hypervolume) << ',' << (s.refined ? 1 : 0) << '\n';
    return o.str();
}

std::string archive_csv(const SearchResult& r) {
    std::vector<const Individual*> rows;
    for (const auto& i : r.archive) rows.push_back(&i);
    std::sort(rows.begin(), rows.end(), [](auto a, auto b) { return a->id < b->id; });
    std::ostringstream o;
    o << "id,born,lineage,parent_a,parent_b,val_loss,e_tok_uj,ttft_ms,tpot_ms,params_m,active_layers,genome_hash\n";
    for (const auto* i : rows) {
        char hash[17];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(genome_hash(i->genome)));
        o << i->id << ',' << i->born << ',' << i->lineage << ',' << i->parents[0] << ',' << i->parents[1] << ','
          << num(i->obj.val_loss) << ',' << num(i->obj.e_tok_uj) << ',' << num(i->obj.ttft_ms) << ','
          << num(i->obj.tpot_ms) << ',' << num(i->params_m) << ',' << i->genome.active_layers() << ',' << hash
          << '\n';
    }
    return o.str();
}

std::string events_jsonl(const SearchResult& r) {
    std::string out;
    for (const auto& e : r.events) {
        nlohmann::json j{{"generation", e.generation},
                         {"exploit_ids", e.exploit_ids},
                         {"explore_ids", e.explore_ids},
                         {"dropped", e.dropped},
                         {"buffer_size", e.buffer_size},
                         {"mae_before", e.mae_before},
                         {"mae_after", e.mae_after}};
        nlohmann::json labels = nlohmann::json::array();
        for (double y : e.labels) labels.push_back(std::isfinite(y) ? nlohmann::json(y) : nlohmann::json(nullptr));
        j["labels"] = labels;
        out += j.dump() + "\n";
    }
    return out;
}

namespace {

constexpr double kW = 640, kH = 440, kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;

struct Axis {
    double lo, hi;
    double span() const { return hi > lo ? hi - lo : 1.0; }
};

Axis padded(double lo, double hi) {
    if (!(hi > lo)) {
        const double d = std::abs(lo) > 0 ? std::abs(lo) * 0.05 : 1.0;
        return {lo - d, hi + d};
    }
    const double p = 0.05 * (hi - lo);
    return {lo - p, hi + p};
}

// a few stops of a perceptually ordered blue-green-yellow ramp
std::string ramp(double t) {
    static const std::array<std::array<double, 3>, 5> stops{
        {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * 4.0;
    const auto k = std::min<std::size_t>(3, static_cast<std::size_t>(t));
    const double f = t - static_cast<double>(k);
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(stops[k][0] + f * (stops[k + 1][0] - stops[k][0])),
                  static_cast<int>(stops[k][1] + f * (stops[k + 1][1] - stops[k][1])),
                  static_cast<int>(stops[k][2] + f * (stops[k + 1][2] - stops[k][2])));
    return buf;
}

std::string f2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string g4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

void frame(std::ostringstream& o, const Axis& x, const Axis& y, const std::string& xl, const std::string& yl,
           const std::string& title) {
    const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kLeft << "\" y=\"22\" font-size=\"14\">" << title << "</text>\n"
      << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double fx = kLeft + pw * i / 4.0, fy = kTop + ph - ph * i / 4.0;
        o << "<line x1=\"" << f2(fx) << "\" y1=\"" << kTop + ph << "\" x2=\"" << f2(fx) << "\" y2=\"" << kTop + ph + 5
          << "\" stroke=\"#444\"/>\n"
          << "<text x=\"" << f2(fx) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
          << g4(x.lo + x.span() * i / 4.0) << "</text>\n"
          << "<line x1=\"" << kLeft - 5 << "\" y1=\"" << f2(fy) << "\" x2=\"" << kLeft << "\" y2=\"" << f2(fy)
          << "\" stroke=\"#444\"/>\n"
          << "<text x=\"" << kLeft - 8 << "\" y=\"" << f2(fy + 4) << "\" text-anchor=\"end\">"
          << g4(y.lo + y.span() * i / 4.0) << "</text>\n";
    }
    o << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 15 << "\" text-anchor=\"middle\">" << xl << "</text>\n"
      << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << yl
      << "</text>\n";
}

}  // namespace

std::string front_svg(const std::vector<Individual>& front, const std::string& title) {
    std::vector<const Individual*> pts;
    for (const auto& i : front)
        if (std::isfinite(i.obj.val_loss) && std::isfinite(i.obj.e_tok_uj)) pts.push_back(&i);
    std::sort(pts.begin(), pts.end(), [](auto a, auto b) { return a->id < b->id; });

    double x0 = 0, x1 = 1, y0 = 0, y1 = 1, c0 = 0, c1 = 1, s0 = 0, s1 = 1;
    if (!pts.empty()) {
        x0 = x1 = pts[0]->obj.val_loss;
        y0 = y1 = pts[0]->obj.e_tok_uj;
        c0 = c1 = pts[0]->obj.ttft_ms;
        s0 = s1 = pts[0]->obj.tpot_ms;
        for (const auto* p : pts) {
            x0 = std::min(x0, p->obj.val_loss), x1 = std::max(x1, p->obj.val_loss);
            y0 = std::min(y0, p->obj.e_tok_uj), y1 = std::max(y1, p->obj.e_tok_uj);
            c0 = std::min(c0, p->obj.ttft_ms), c1 = std::max(c1, p->obj.ttft_ms);
            s0 = std::min(s0, p->obj.tpot_ms), s1 = std::max(s1, p->obj.tpot_ms);
        }
    }
    const Axis x = padded(x0, x1), y = padded(y0, y1);
    std::ostringstream o;
    frame(o, x, y, "validation loss", "energy per token (uJ)", title);
    const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
    auto radius = [&](double tpot) { return s1 > s0 ? 3.0 + 7.0 * (tpot - s0) / (s1 - s0) : 5.0; };
    for (const auto* p : pts) {
        const double cx = kLeft + pw * (p->obj.val_loss - x.lo) / x.span();
        const double cy = kTop + ph - ph * (p->obj.e_tok_uj - y.lo) / y.span();
        o << "<circle cx=\"" << f2(cx) << "\" cy=\"" << f2(cy) << "\" r=\"" << f2(radius(p->obj.tpot_ms))
          << "\" fill=\"" << ramp(c1 > c0 ? (p->obj.ttft_ms - c0) / (c1 - c0) : 0.5)
          << "\" fill-opacity=\"0.85\" stroke=\"#222\" stroke-width=\"0.5\"><title>id " << p->id << "</title></circle>\n";
    }
    // legend: colour bar for TTFT, two reference circles for TPOT
    const double lx = kW - kRight + 25;
    o << "<text x=\"" << lx << "\" y=\"" << kTop + 4 << "\">TTFT (ms)</text>\n";
    for (int i = 0; i < 20; ++i)
        o << "<rect x=\"" << lx << "\" y=\"" << f2(kTop + 12 + 6 * (19 - i)) << "\" width=\"14\" height=\"6\" fill=\""
          << ramp(i / 19.0) << "\"/>\n";
    o << "<text x=\"" << lx + 20 << "\" y=\"" << kTop + 22 << "\">" << g4(c1) << "</text>\n"
      << "<text x=\"" << lx + 20 << "\" y=\"" << kTop + 132 << "\">" << g4(c0) << "</text>\n"
      << "<text x=\"" << lx << "\" y=\"" << kTop + 170 << "\">TPOT (ms)</text>\n"
      << "<circle cx=\"" << lx + 7 << "\" cy=\"" << kTop + 190 << "\" r=\"3\" fill=\"#999\"/>\n"
      << "<text x=\"" << lx + 20 << "\" y=\"" << kTop + 194 << "\">" << g4(s0) << "</text>\n"
      << "<circle cx=\"" << lx + 7 << "\" cy=\"" << kTop + 215 << "\" r=\"10\" fill=\"#999\"/>\n"
      << "<text x=\"" << lx + 20 << "\" y=\"" << kTop + 219 << "\">" << g4(s1) << "</text>\n"
      << "</svg>\n";
    return o.str();
}

std::string ablation_csv(const AblationResult& a) {
    std::ostringstream o;
    o << "recipe,generation,mean,std";
    const std::size_t n_seeds = a.curves.empty() ? 0 : a.curves.front().seeds.size();
    for (std::size_t s = 0; s < n_seeds; ++s) o << ",seed_" << a.curves.front().seeds[s];
    o << '\n';
    for (const auto& c : a.curves)
        for (std::size_t g = 0; g < c.mean.size(); ++g) {
            o << c.recipe << ',' << g << ',' << num(c.mean[g]) << ',' << num(c.stddev[g]);
            for (const auto& h : c.hv) o << ',' << num(h[g]);
            o << '\n';
        }
    return o.str();
}

std::string ablation_svg(const AblationResult& a) {
    static const char* colours[] = {"#1b6ca8", "#d1495b", "#2e8b57", "#8e6c8a"};
    std::size_t gens = 0;
    double lo = 0, hi = 1;
    bool first = true;
    for (const auto& c : a.curves) {
        gens = std::max(gens, c.mean.size());
        for (std::size_t g = 0; g < c.mean.size(); ++g) {
            const double l = c.mean[g] - c.stddev[g], h = c.mean[g] + c.stddev[g];
            lo = first ? l : std::min(lo, l);
            hi = first ? h : std::max(hi, h);
            first = false;
        }
    }
    const Axis x{0, gens > 1 ? static_cast<double>(gens - 1) : 1.0};
    const Axis y = padded(lo, hi);
    std::ostringstream o;
    frame(o, x, y, "generation", "hypervolume", "Hypervolume by recipe (mean +/- std)");
    const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
    auto px = [&](double g) { return kLeft + pw * (g - x.lo) / x.span(); };
    auto py = [&](double v) { return kTop + ph - ph * (v - y.lo) / y.span(); };
    for (std::size_t k = 0; k < a.curves.size(); ++k) {
        const auto& c = a.curves[k];
        const char* col = colours[k % 4];
        std::string band, line;
        for (std::size_t g = 0; g < c.mean.size(); ++g)
            band += f2(px(static_cast<double>(g))) + "," + f2(py(c.mean[g] + c.stddev[g])) + " ";
        for (std::size_t g = c.mean.size(); g-- > 0;)
            band += f2(px(static_cast<double>(g))) + "," + f2(py(c.mean[g] - c.stddev[g])) + " ";
        for (std::size_t g = 0; g < c.mean.size(); ++g)
            line += f2(px(static_cast<double>(g))) + "," + f2(py(c.mean[g])) + " ";
        o << "<polygon points=\"" << band << "\" fill=\"" << col << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n"
          << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n"
          << "<line x1=\"" << kW - kRight + 20 << "\" y1=\"" << kTop + 10 + 20 * k << "\" x2=\"" << kW - kRight + 40
          << "\" y2=\"" << kTop + 10 + 20 * k << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n"
          << "<text x=\"" << kW - kRight + 45 << "\" y=\"" << kTop + 14 + 20 * k << "\">" << c.recipe << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string grid_csv(const GridSearchResult& g) {
    std::ostringstream o;
    o << "index,n_mac,w_core_kb,n_chips_max,feasible\n";
    for (const auto& c : g.configs)
        o << c.grid_index << ',' << c.n_mac << ',' << c.w_core_kb << ',' << c.n_chips_max << ',' << (c.feasible ? 1 : 0)
          << '\n';
    return o.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + p.string());
}

std::string read_text(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

}  // namespace ihanas::tools
