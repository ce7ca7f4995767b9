#include "cvae/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "cvae/errors.hpp"

namespace cvae::svg {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string num(double v) { return fmt("%.2f", v); }

std::string escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = 0.0, hi = 1.0;

    void pad() {
        if (hi <= lo) {
            lo -= 0.5;
            hi += 0.5;
        } else {
            const double m = 0.05 * (hi - lo);
            lo -= m;
            hi += m;
        }
    }
};

Range range_of(const std::vector<double>& v) {
    if (v.empty()) return {};
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    return {*mn, *mx};
}

class Canvas {
public:
    Canvas(const PlotOptions& o, Range x, Range y, bool legend)
        : opt_(o), x_(x), y_(y), right_(legend ? 140.0 : 20.0) {}

    double px(double v) const { return left_ + (v - x_.lo) / (x_.hi - x_.lo) * plot_w(); }
    double py(double v) const { return top_ + (1.0 - (v - y_.lo) / (y_.hi - y_.lo)) * plot_h(); }
    double plot_w() const { return opt_.width - left_ - right_; }
    double plot_h() const { return opt_.height - top_ - bottom_; }

    std::string open() const {
        std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(opt_.width) + "\" height=\"" +
                        num(opt_.height) + "\" viewBox=\"0 0 " + num(opt_.width) + " " + num(opt_.height) +
                        "\" font-family=\"sans-serif\" font-size=\"11\">\n";
        s += "<rect x=\"0\" y=\"0\" width=\"" + num(opt_.width) + "\" height=\"" + num(opt_.height) +
             "\" fill=\"white\"/>\n";
        if (!opt_.title.empty())
            s += "<text x=\"" + num(opt_.width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
                 escape(opt_.title) + "</text>\n";
        return s;
    }

    std::string axes(std::string_view xlabel, std::string_view ylabel, bool x_ticks = true) const {
        std::string s = "<g class=\"axes\" stroke=\"black\" fill=\"none\">\n";
        s += "<line x1=\"" + num(left_) + "\" y1=\"" + num(top_ + plot_h()) + "\" x2=\"" + num(left_ + plot_w()) +
             "\" y2=\"" + num(top_ + plot_h()) + "\"/>\n";
        s += "<line x1=\"" + num(left_) + "\" y1=\"" + num(top_) + "\" x2=\"" + num(left_) + "\" y2=\"" +
             num(top_ + plot_h()) + "\"/>\n";
        s += "</g>\n<g class=\"ticks\" font-size=\"10\">\n";
        for (int i = 0; i <= 4; ++i) {
            const double t = i / 4.0;
            if (x_ticks) {
                const double v = x_.lo + t * (x_.hi - x_.lo);
                s += "<line x1=\"" + num(px(v)) + "\" y1=\"" + num(top_ + plot_h()) + "\" x2=\"" + num(px(v)) +
                     "\" y2=\"" + num(top_ + plot_h() + 4) + "\" stroke=\"black\"/>\n";
                s += "<text x=\"" + num(px(v)) + "\" y=\"" + num(top_ + plot_h() + 16) +
                     "\" text-anchor=\"middle\">" + fmt("%.3g", v) + "</text>\n";
            }
            const double w = y_.lo + t * (y_.hi - y_.lo);
            s += "<line x1=\"" + num(left_ - 4) + "\" y1=\"" + num(py(w)) + "\" x2=\"" + num(left_) + "\" y2=\"" +
                 num(py(w)) + "\" stroke=\"black\"/>\n";
            s += "<text x=\"" + num(left_ - 6) + "\" y=\"" + num(py(w) + 3) + "\" text-anchor=\"end\">" +
                 fmt("%.3g", w) + "</text>\n";
        }
        s += "</g>\n";
        s += "<text x=\"" + num(left_ + plot_w() / 2) + "\" y=\"" + num(opt_.height - 10) +
             "\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
        s += "<text x=\"14\" y=\"" + num(top_ + plot_h() / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
             num(top_ + plot_h() / 2) + ")\">" + escape(ylabel) + "</text>\n";
        return s;
    }

    std::string legend(const std::vector<std::string>& labels) const {
        std::string s = "<g class=\"legend\">\n";
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const double y = top_ + 10 + 16 * static_cast<double>(i);
            const double x = opt_.width - right_ + 10;
            s += "<rect x=\"" + num(x) + "\" y=\"" + num(y - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
                 kPalette[i % 8] + "\"/>\n";
            s += "<text x=\"" + num(x + 14) + "\" y=\"" + num(y + 1) + "\">" + escape(labels[i]) + "</text>\n";
        }
        return s + "</g>\n";
    }

private:
    PlotOptions opt_;
    Range x_, y_;
    double left_ = 60.0, right_, top_ = 32.0, bottom_ = 40.0;
};

void require(FigureKind kind, const Series& s) {
    for (const auto& c : required_columns(kind))
        if (!s.table.has_column(c)) {
            std::string cols;
            for (const auto& r : required_columns(kind)) cols += (cols.empty() ? "" : ", ") + r;
            throw ContractError("plot " + std::string(to_string(kind)) + ": input '" + s.label +
                                "' lacks column '" + c + "' (expected columns: " + cols + ")");
        }
}

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double f = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
}

std::string scatter(const std::vector<Series>& series, const PlotOptions& o) {
    std::vector<std::pair<std::size_t, std::size_t>> cols;
    std::vector<double> xs, ys;
    for (const auto& s : series) {
        std::size_t cx, cy;
        if (o.x_column.empty() && o.y_column.empty()) {
            if (s.table.header.size() < 2)
                throw ContractError("plot scatter: input '" + s.label + "' needs at least two columns");
            cx = 0;
            cy = 1;
        } else {
            cx = s.table.column(o.x_column);
            cy = s.table.column(o.y_column);
        }
        cols.emplace_back(cx, cy);
        for (const auto& r : s.table.rows) {
            xs.push_back(r[cx]);
            ys.push_back(r[cy]);
        }
    }
    Range rx = range_of(xs), ry = range_of(ys);
    rx.pad();
    ry.pad();
    Canvas c(o, rx, ry, series.size() > 1);
    std::string out = c.open();
    const std::string xl = series.empty() || series[0].table.header.size() < 2 ? "x" : series[0].table.header[cols[0].first];
    const std::string yl = series.empty() || series[0].table.header.size() < 2 ? "y" : series[0].table.header[cols[0].second];
    out += c.axes(xl, yl);
    for (std::size_t i = 0; i < series.size(); ++i) {
        out += std::string("<g class=\"marks\" fill=\"") + kPalette[i % 8] + "\" fill-opacity=\"0.6\">\n";
        for (const auto& r : series[i].table.rows)
            out += "<circle cx=\"" + num(c.px(r[cols[i].first])) + "\" cy=\"" + num(c.py(r[cols[i].second])) +
                   "\" r=\"1.5\"/>\n";
        out += "</g>\n";
    }
    if (series.size() > 1) {
        std::vector<std::string> labels;
        for (const auto& s : series) labels.push_back(s.label);
        out += c.legend(labels);
    }
    return out + "</svg>\n";
}

std::string line(const std::vector<Series>& series, const PlotOptions& o) {
    std::vector<double> xs, ys;
    // (series, component) -> sorted (radius, count) points
    std::map<std::pair<std::size_t, long long>, std::vector<std::pair<double, double>>> curves;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const auto& t = series[i].table;
        const std::size_t ck = t.column("component"), cr = t.column("radius"), cc = t.column("count");
        for (const auto& r : t.rows) {
            curves[{i, std::llround(r[ck])}].emplace_back(r[cr], r[cc]);
            xs.push_back(r[cr]);
            ys.push_back(r[cc]);
        }
    }
    Range rx = range_of(xs), ry = range_of(ys);
    rx.pad();
    ry.pad();
    std::vector<std::string> labels;
    for (const auto& [key, pts] : curves)
        labels.push_back((series.size() > 1 ? series[key.first].label + " " : std::string()) + "component " +
                         std::to_string(key.second));
    Canvas c(o, rx, ry, !curves.empty());
    std::string out = c.open() + c.axes("distance to component mean", "neighbours");
    std::size_t idx = 0;
    for (auto& [key, pts] : curves) {
        std::sort(pts.begin(), pts.end());
        out += std::string("<polyline class=\"marks\" fill=\"none\" stroke=\"") + kPalette[idx++ % 8] +
               "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t j = 0; j < pts.size(); ++j)
            out += (j ? " " : "") + num(c.px(pts[j].first)) + "," + num(c.py(pts[j].second));
        out += "\"/>\n";
    }
    if (!curves.empty()) out += c.legend(labels);
    return out + "</svg>\n";
}

std::string box(const std::vector<Series>& series, const PlotOptions& o) {
    std::vector<double> all;
    for (const auto& s : series) {
        const auto v = s.table.values("count");
        all.insert(all.end(), v.begin(), v.end());
    }
    Range rx{0.0, static_cast<double>(std::max<std::size_t>(series.size(), 1))};
    Range ry = range_of(all);
    ry.pad();
    Canvas c(o, rx, ry, false);
    std::string out = c.open() + c.axes("", "distinct classes", false);
    const double half = 0.3 * (c.px(1.0) - c.px(0.0)) / 2.0;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double cx = c.px(static_cast<double>(i) + 0.5);
        out += "<text x=\"" + num(cx) + "\" y=\"" + num(c.py(ry.lo) + 16) + "\" text-anchor=\"middle\">" +
               escape(series[i].label) + "</text>\n";
        const auto v = series[i].table.values("count");
        if (v.empty()) continue;
        const double q1 = quantile(v, 0.25), med = quantile(v, 0.5), q3 = quantile(v, 0.75);
        const double lo = *std::min_element(v.begin(), v.end()), hi = *std::max_element(v.begin(), v.end());
        const char* colour = kPalette[i % 8];
        out += "<g class=\"marks\" stroke=\"black\">\n";
        out += "<line x1=\"" + num(cx) + "\" y1=\"" + num(c.py(lo)) + "\" x2=\"" + num(cx) + "\" y2=\"" +
               num(c.py(q1)) + "\"/>\n";
        out += "<line x1=\"" + num(cx) + "\" y1=\"" + num(c.py(q3)) + "\" x2=\"" + num(cx) + "\" y2=\"" +
               num(c.py(hi)) + "\"/>\n";
        out += "<rect x=\"" + num(cx - half) + "\" y=\"" + num(c.py(q3)) + "\" width=\"" + num(2 * half) +
               "\" height=\"" + num(c.py(q1) - c.py(q3)) + "\" fill=\"" + colour + "\" fill-opacity=\"0.5\"/>\n";
        out += "<line x1=\"" + num(cx - half) + "\" y1=\"" + num(c.py(med)) + "\" x2=\"" + num(cx + half) +
               "\" y2=\"" + num(c.py(med)) + "\" stroke-width=\"2\"/>\n";
        out += "</g>\n";
    }
    return out + "</svg>\n";
}

double spacing(const std::set<double>& v) {
    if (v.size() < 2) return 1.0;
    double best = *v.rbegin() - *v.begin();
    for (auto it = v.begin(); std::next(it) != v.end(); ++it) best = std::min(best, *std::next(it) - *it);
    return best;
}

std::string latent_field(const std::vector<Series>& series, const PlotOptions& o) {
    if (series.size() > 1) throw ContractError("plot latent-field: expects exactly one input");
    std::set<double> z0s, z1s;
    std::vector<double> vals;
    const csv::Table* t = series.empty() ? nullptr : &series[0].table;
    std::size_t c0 = 0, c1 = 0, cv = 0;
    if (t) {
        c0 = t->column("z0");
        c1 = t->column("z1");
        cv = t->column("mf");
        for (const auto& r : t->rows) {
            z0s.insert(r[c0]);
            z1s.insert(r[c1]);
            vals.push_back(r[cv]);
        }
    }
    const double dx = spacing(z0s), dy = spacing(z1s);
    Range rx = z0s.empty() ? Range{} : Range{*z0s.begin() - dx / 2, *z0s.rbegin() + dx / 2};
    Range ry = z1s.empty() ? Range{} : Range{*z1s.begin() - dy / 2, *z1s.rbegin() + dy / 2};
    Canvas c(o, rx, ry, false);
    std::string out = c.open() + c.axes("z0", "z1");
    if (t && !t->rows.empty()) {
        const Range rv = range_of(vals);
        out += "<g class=\"marks\" shape-rendering=\"crispEdges\">\n";
        for (const auto& r : t->rows) {
            const double f = rv.hi > rv.lo ? (r[cv] - rv.lo) / (rv.hi - rv.lo) : 0.0;
            const int g = static_cast<int>(std::lround(255.0 * (1.0 - f)));
            const double x = c.px(r[c0] - dx / 2), y = c.py(r[c1] + dy / 2);
            const std::string grey = std::to_string(g);
            out += "<rect class=\"cell\" x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" +
                   num(c.px(r[c0] + dx / 2) - x) + "\" height=\"" + num(c.py(r[c1] - dy / 2) - y) + "\" fill=\"rgb(" +
                   grey + "," + grey + "," + grey + ")\"/>\n";
        }
        out += "</g>\n";
    }
    return out + "</svg>\n";
}

}  // namespace

std::string_view to_string(FigureKind k) {
    switch (k) {
        case FigureKind::Scatter: return "scatter";
        case FigureKind::Line: return "line";
        case FigureKind::Box: return "box";
        case FigureKind::LatentField: return "latent-field";
    }
    return "?";
}

FigureKind figure_kind_from_string(std::string_view s) {
    if (s == "scatter") return FigureKind::Scatter;
    if (s == "line") return FigureKind::Line;
    if (s == "box") return FigureKind::Box;
    if (s == "latent-field") return FigureKind::LatentField;
    throw ContractError("unknown figure kind '" + std::string(s) + "' (scatter, line, box, latent-field)");
}

std::vector<std::string> required_columns(FigureKind kind) {
    switch (kind) {
        case FigureKind::Scatter: return {};
        case FigureKind::Line: return {"component", "radius", "count"};
        case FigureKind::Box: return {"count"};
        case FigureKind::LatentField: return {"z0", "z1", "mf"};
    }
    return {};
}

std::string render(FigureKind kind, const std::vector<Series>& series, const PlotOptions& options) {
    for (const auto& s : series) require(kind, s);
    switch (kind) {
        case FigureKind::Scatter: return scatter(series, options);
        case FigureKind::Line: return line(series, options);
        case FigureKind::Box: return box(series, options);
        case FigureKind::LatentField: return latent_field(series, options);
    }
    throw ContractError("plot: unknown figure kind");
}

}  // namespace cvae::svg
