#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "eqlab/error.hpp"
#include "eqlab/explore.hpp"

namespace eqlab::explore {

namespace fs = std::filesystem;

namespace {

constexpr double kW = 760, kH = 500;
constexpr double kL = 80, kR = 200, kT = 40, kB = 60;  // margins, legend on the right

std::string f2(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string family_of(const std::string& model_id)
{
    const auto colon = model_id.find(':');
    return colon == std::string::npos ? model_id : model_id.substr(0, colon);
}

const char* legend_name(const std::string& fam)
{
    if (fam == "ffe") return "linear (FFE)";
    if (fam == "volterra") return "Volterra";
    if (fam == "cnn") return "CNN";
    if (fam == "snn") return "SNN";
    if (fam == "cma") return "CMA";
    if (fam == "vae") return "VAE-LE";
    if (fam == "raw") return "unequalized";
    return "other";
}

const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#d62728", "#17becf", "#8c564b", "#e377c2"};

const char* family_color(const std::string& fam)
{
    static const std::vector<std::string> order{"ffe", "volterra", "cnn", "snn", "cma", "vae"};
    const auto it = std::find(order.begin(), order.end(), fam);
    if (fam == "raw")
        return "#7f7f7f";
    return palette[it == order.end() ? 7 : it - order.begin()];
}

struct Axis {
    double lo = 0, hi = 1;  // in data units (log10 when log)
    bool log = true;
    double px0 = 0, px1 = 1;

    double map(double v) const
    {
        const double t = log ? std::log10(v) : v;
        return px0 + (t - lo) / (hi - lo) * (px1 - px0);
    }
};

Axis log_axis(double vmin, double vmax, double px0, double px1)
{
    Axis a;
    a.lo = std::floor(std::log10(vmin));
    a.hi = std::ceil(std::log10(vmax));
    if (a.hi <= a.lo)
        a.hi = a.lo + 1;
    a.px0 = px0;
    a.px1 = px1;
    return a;
}

Axis lin_axis(double vmin, double vmax, double px0, double px1)
{
    Axis a;
    a.log = false;
    a.lo = std::floor(vmin);
    a.hi = std::ceil(vmax);
    if (a.hi <= a.lo) {
        a.lo -= 1;
        a.hi += 1;
    }
    a.px0 = px0;
    a.px1 = px1;
    return a;
}

struct Series {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> pts;  // data units
    bool line = true;
    std::vector<std::pair<double, double>> front;  // drawn as polyline when >= 2 points
};

struct Figure {
    std::string title, xlabel, ylabel;
    std::vector<Series> series;
    std::optional<double> vline;  // budget
    std::optional<std::pair<double, double>> circle;
    std::optional<double> hline;  // unequalized reference
    bool xlog = true;
    double y_floor = 1e-6;  // where zero metrics are drawn
};

std::string render(const Figure& fig)
{
    double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
    for (const auto& s : fig.series)
        for (auto [x, y] : s.pts) {
            if (fig.xlog && x <= 0)
                continue;
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            if (y > 0) {
                ymin = std::min(ymin, y);
                ymax = std::max(ymax, y);
            }
        }
    if (fig.vline) {
        xmin = std::min(xmin, *fig.vline);
        xmax = std::max(xmax, *fig.vline);
    }
    if (fig.hline && *fig.hline > 0) {
        ymin = std::min(ymin, *fig.hline);
        ymax = std::max(ymax, *fig.hline);
    }
    if (!std::isfinite(xmin)) {
        xmin = 1;
        xmax = 10;
    }
    if (!std::isfinite(ymin)) {
        ymin = fig.y_floor;
        ymax = 1;
    }
    ymin = std::max(std::min(ymin, fig.y_floor * 10), fig.y_floor);
    const Axis ax = fig.xlog ? log_axis(xmin, xmax, kL, kW - kR) : lin_axis(xmin, xmax, kL, kW - kR);
    const Axis ay = log_axis(ymin, std::max(ymax, ymin * 10), kH - kB, kT);
    auto yclamp = [&](double y) { return y > 0 ? y : std::pow(10.0, ay.lo); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << f2(kW / 2 - kR / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << fig.title
      << "</text>\n";
    // grid and ticks
    for (double d = ay.lo; d <= ay.hi + 1e-9; d += 1) {
        const double y = ay.px0 + (d - ay.lo) / (ay.hi - ay.lo) * (ay.px1 - ay.px0);
        o << "<line x1=\"" << f2(kL) << "\" y1=\"" << f2(y) << "\" x2=\"" << f2(kW - kR) << "\" y2=\"" << f2(y)
          << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << f2(kL - 6) << "\" y=\"" << f2(y + 4) << "\" text-anchor=\"end\">1e" << static_cast<int>(d)
          << "</text>\n";
    }
    const double xstep = fig.xlog ? 1.0 : std::max(1.0, std::ceil((ax.hi - ax.lo) / 10));
    for (double d = ax.lo; d <= ax.hi + 1e-9; d += xstep) {
        const double x = ax.px0 + (d - ax.lo) / (ax.hi - ax.lo) * (ax.px1 - ax.px0);
        o << "<line x1=\"" << f2(x) << "\" y1=\"" << f2(kT) << "\" x2=\"" << f2(x) << "\" y2=\"" << f2(kH - kB)
          << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << f2(x) << "\" y=\"" << f2(kH - kB + 16) << "\" text-anchor=\"middle\">";
        if (fig.xlog)
            o << "1e" << static_cast<int>(d);
        else
            o << static_cast<int>(d);
        o << "</text>\n";
    }
    o << "<rect x=\"" << f2(kL) << "\" y=\"" << f2(kT) << "\" width=\"" << f2(kW - kR - kL) << "\" height=\""
      << f2(kH - kB - kT) << "\" fill=\"none\" stroke=\"black\"/>\n";
    o << "<text x=\"" << f2((kL + kW - kR) / 2) << "\" y=\"" << f2(kH - 18) << "\" text-anchor=\"middle\">"
      << fig.xlabel << "</text>\n";
    o << "<text transform=\"translate(20," << f2((kT + kH - kB) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
      << fig.ylabel << "</text>\n";

    if (fig.hline) {
        const double y = ay.map(yclamp(*fig.hline));
        o << "<line x1=\"" << f2(kL) << "\" y1=\"" << f2(y) << "\" x2=\"" << f2(kW - kR) << "\" y2=\"" << f2(y)
          << "\" stroke=\"#7f7f7f\" stroke-dasharray=\"2,3\"/>\n";
    }
    if (fig.vline) {
        const double x = ax.map(*fig.vline);
        o << "<line x1=\"" << f2(x) << "\" y1=\"" << f2(kT) << "\" x2=\"" << f2(x) << "\" y2=\"" << f2(kH - kB)
          << "\" stroke=\"#d62728\" stroke-dasharray=\"6,4\"/>\n";
        o << "<text x=\"" << f2(x + 4) << "\" y=\"" << f2(kT + 14) << "\" fill=\"#d62728\">MAC budget</text>\n";
    }
    for (const auto& s : fig.series) {
        const auto& poly = fig.xlog && !s.front.empty() ? s.front : (s.line ? s.pts : s.front);
        if (poly.size() >= 2) {
            o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
            for (std::size_t i = 0; i < poly.size(); ++i)
                o << (i ? " " : "") << f2(ax.map(poly[i].first)) << ',' << f2(ay.map(yclamp(poly[i].second)));
            o << "\"/>\n";
        }
        for (auto [x, y] : s.pts) {
            if (fig.xlog && x <= 0)
                continue;
            o << "<circle cx=\"" << f2(ax.map(x)) << "\" cy=\"" << f2(ay.map(yclamp(y))) << "\" r=\"3\" fill=\""
              << (y > 0 ? s.color : "white") << "\" stroke=\"" << s.color << "\"/>\n";
        }
    }
    if (fig.circle) {
        o << "<circle cx=\"" << f2(ax.map(fig.circle->first)) << "\" cy=\"" << f2(ay.map(yclamp(fig.circle->second)))
          << "\" r=\"9\" fill=\"none\" stroke=\"black\" stroke-width=\"1.5\"/>\n";
    }
    double ly = kT + 10;
    for (const auto& s : fig.series) {
        o << "<rect x=\"" << f2(kW - kR + 16) << "\" y=\"" << f2(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
          << s.color << "\"/>\n";
        o << "<text x=\"" << f2(kW - kR + 32) << "\" y=\"" << f2(ly + 1) << "\">" << s.label << "</text>\n";
        ly += 18;
    }
    if (fig.hline) {
        o << "<text x=\"" << f2(kW - kR + 16) << "\" y=\"" << f2(ly + 1) << "\" fill=\"#7f7f7f\">--- unequalized</text>\n";
        ly += 18;
    }
    if (fig.circle)
        o << "<text x=\"" << f2(kW - kR + 16) << "\" y=\"" << f2(ly + 1) << "\">O budget-optimal</text>\n";
    o << "<text x=\"" << f2(kL + 4) << "\" y=\"" << f2(kH - kB - 6)
      << "\" fill=\"#7f7f7f\" font-size=\"10\">hollow markers: no errors measured (axis floor)</text>\n";
    o << "</svg>\n";
    return o.str();
}

std::string slug(std::string s)
{
    for (auto& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-')
            c = '_';
    return s;
}

void write_file(const fs::path& p, const std::string& text)
{
    std::ofstream f(p, std::ios::binary);
    f << text;
    if (!f)
        throw ParameterError("cannot write " + p.string());
}

} // namespace

std::vector<std::string> emit_plots(const ResultSet& rs, double mac_budget, const std::string& dir)
{
    std::size_t ok = 0;
    for (const auto& r : rs.rows)
        ok += r.failed ? 0 : 1;
    if (ok == 0)
        throw UsageError("emit_plots: no results to plot");
    fs::create_directories(dir);
    std::vector<std::string> written;

    std::set<std::string> scenarios;
    std::set<double> snrs;
    for (const auto& r : rs.rows) {
        scenarios.insert(r.cell.scenario);
        snrs.insert(r.cell.snr_db);
    }
    for (const auto& sc : scenarios) {
        if (sc.rfind("imdd", 0) != 0)
            continue;
        for (double snr : snrs) {
            auto pts = mean_points(rs, sc, snr, true);
            if (pts.empty())
                continue;
            Figure fig;
            fig.title = sc + ", SNR " + num(snr) + " dB";
            fig.xlabel = "MACs per symbol";
            fig.ylabel = "BER";
            fig.vline = mac_budget;
            std::map<std::string, std::vector<ParetoPoint>> fam;
            for (const auto& p : pts) {
                if (p.model_id == "raw")
                    fig.hline = p.metric;
                else
                    fam[family_of(p.model_id)].push_back(p);
            }
            std::ostringstream csv;
            csv << "series,model_id,macs_per_symbol,ber,on_front,budget_optimal\n";
            std::vector<ParetoPoint> all;
            for (const auto& [name, v] : fam)
                all.insert(all.end(), v.begin(), v.end());
            const auto best = budget_optimal(all, mac_budget);
            if (best)
                fig.circle = {best->macs, best->metric};
            for (auto& [name, v] : fam) {
                Series s;
                s.label = legend_name(name);
                s.color = family_color(name);
                s.line = false;
                mark_dominated(v);
                for (const auto& p : v)
                    s.pts.push_back({p.macs, p.metric});
                for (const auto& p : pareto_front(v))
                    s.front.push_back({p.macs, p.metric});
                for (const auto& p : v)
                    csv << name << ',' << p.model_id << ',' << num(p.macs) << ',' << num(p.metric) << ','
                        << (p.dominated ? 0 : 1) << ',' << (best && best->model_id == p.model_id ? 1 : 0) << '\n';
                fig.series.push_back(std::move(s));
            }
            if (fig.hline)
                csv << "raw,raw,0," << num(*fig.hline) << ",0,0\n";
            const std::string base = "ber_vs_macs_" + slug(sc) + "_snr" + slug(num(snr));
            write_file(fs::path(dir) / (base + ".svg"), render(fig));
            write_file(fs::path(dir) / (base + ".csv"), csv.str());
            written.push_back(base + ".svg");
            written.push_back(base + ".csv");
        }
    }

    // error rate versus SNR: one curve per (scenario, model)
    const bool coherent = std::any_of(scenarios.begin(), scenarios.end(),
                                      [](const std::string& s) { return s.rfind("imdd", 0) != 0; });
    if (coherent || snrs.size() > 1) {
        Figure fig;
        fig.xlog = false;
        fig.xlabel = "SNR (dB)";
        fig.ylabel = coherent ? "SER" : "BER";
        fig.title = coherent ? "SER versus SNR" : "BER versus SNR";
        std::ostringstream csv;
        csv << "series,scenario,model_id,snr_db," << (coherent ? "ser" : "ber") << '\n';
        std::size_t k = 0;
        for (const auto& sc : scenarios) {
            std::map<std::string, std::vector<std::pair<double, double>>> curves;
            for (double snr : snrs)
                for (const auto& p : mean_points(rs, sc, snr, !coherent))
                    curves[p.model_id].push_back({snr, p.metric});
            for (const auto& [id, v] : curves) {
                Series s;
                s.label = scenarios.size() > 1 ? sc + " " + id : id;
                s.color = palette[k++ % 8];
                s.pts = v;
                for (auto [x, y] : v)
                    csv << s.label << ',' << sc << ',' << id << ',' << num(x) << ',' << num(y) << '\n';
                fig.series.push_back(std::move(s));
            }
        }
        const std::string base = coherent ? "ser_vs_snr" : "ber_vs_snr";
        write_file(fs::path(dir) / (base + ".svg"), render(fig));
        write_file(fs::path(dir) / (base + ".csv"), csv.str());
        written.push_back(base + ".svg");
        written.push_back(base + ".csv");
    }
    return written;
}

} // namespace eqlab::explore
