#include "siamattack/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "siamattack/error.hpp"

namespace siam {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string escape_xml(const std::string& s) {
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

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<PlotSeries>& series) {
    const double width = 640, height = 420;
    const double ml = 70, mr = 150, mt = 40, mb = 50;  // right margin holds the legend
    const double pw = width - ml - mr, ph = height - mt - mb;

    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool any = false;
    for (const auto& s : series) {
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!any) {
                xmin = xmax = s.x[i];
                ymin = 0;
                ymax = s.y[i];
                any = true;
            }
            xmin = std::min(xmin, static_cast<double>(s.x[i]));
            xmax = std::max(xmax, static_cast<double>(s.x[i]));
            ymax = std::max(ymax, static_cast<double>(s.y[i]));
        }
    }
    if (xmax - xmin < 1e-9) xmax = xmin + 1;
    if (ymax - ymin < 1e-9) ymax = ymin + 1;

    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"15\">" << escape_xml(title) << "</text>\n";

    // axes
    out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\"" << fmt(ml + pw)
        << "\" y2=\"" << fmt(mt + ph) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml)
        << "\" y2=\"" << fmt(mt + ph) << "\" stroke=\"black\"/>\n";

    const int ticks = 5;
    for (int i = 0; i <= ticks; ++i) {
        const double tx = xmin + (xmax - xmin) * i / ticks;
        const double ty = ymin + (ymax - ymin) * i / ticks;
        out << "<line x1=\"" << fmt(px(tx)) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\""
            << fmt(px(tx)) << "\" y2=\"" << fmt(mt + ph + 5) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << fmt(px(tx)) << "\" y=\"" << fmt(mt + ph + 18)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
            << fmt(tx) << "</text>\n";
        out << "<line x1=\"" << fmt(ml - 5) << "\" y1=\"" << fmt(py(ty)) << "\" x2=\"" << fmt(ml)
            << "\" y2=\"" << fmt(py(ty)) << "\" stroke=\"black\"/>\n";
        out << "<text x=\"" << fmt(ml - 8) << "\" y=\"" << fmt(py(ty) + 4)
            << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(ty)
            << "</text>\n";
    }
    out << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(height - 12)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << escape_xml(xlabel) << "</text>\n";
    out << "<text x=\"16\" y=\"" << fmt(mt + ph / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        << "transform=\"rotate(-90 16 " << fmt(mt + ph / 2) << ")\">" << escape_xml(ylabel)
        << "</text>\n";

    for (size_t s = 0; s < series.size(); ++s) {
        if (series[s].x.empty()) continue;
        if (series[s].x.size() != series[s].y.size())
            throw ConfigError("plot series '" + series[s].label + "' has mismatched x/y");
        const char* color = kPalette[s % kPaletteSize];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < series[s].x.size(); ++i) {
            if (i) out << ' ';
            out << fmt(px(series[s].x[i])) << ',' << fmt(py(series[s].y[i]));
        }
        out << "\"/>\n";
    }

    for (size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % kPaletteSize];
        const double ly = mt + 10 + 18 * static_cast<double>(s);
        out << "<line x1=\"" << fmt(ml + pw + 10) << "\" y1=\"" << fmt(ly) << "\" x2=\""
            << fmt(ml + pw + 30) << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color
            << "\" stroke-width=\"1.5\"/>\n";
        out << "<text x=\"" << fmt(ml + pw + 35) << "\" y=\"" << fmt(ly + 4)
            << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape_xml(series[s].label)
            << "</text>\n";
    }
    out << "</svg>\n";
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace siam
