#include "gridmtl/evalharness.hpp"

#include <cstdio>
#include <fstream>

namespace gridmtl {

namespace {
const char* kPalette[] = {"#4878a8", "#e49444", "#6a9f58", "#d1615d", "#85b6b2", "#967662"};
}

void write_f2_bar_svg(const std::string& path, const std::string& title,
                      const std::vector<std::string>& criteria,
                      const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    for (const auto& [name, values] : series)
        if (values.size() != criteria.size())
            throw ValidationError("series '" + name + "' length does not match criteria count");

    const int width = 720, height = 420;
    const int left = 60, right = 20, top = 50, bottom = 70;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    const std::size_t groups = criteria.size();
    const std::size_t bars = series.size();
    const double group_w = plot_w / static_cast<double>(groups);
    const double bar_w = group_w * 0.8 / static_cast<double>(bars);

    std::ofstream out(path);
    if (!out) throw Error("cannot open SVG file for writing: " + path);
    char buf[512];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"28\" font-size=\"16\" text-anchor=\"middle\">%s</text>\n",
                  width / 2, title.c_str());
    out << buf;

    // y axis with gridlines at 0.2 steps
    for (int i = 0; i <= 5; ++i) {
        double v = 0.2 * i;
        double y = top + plot_h * (1.0 - v);
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"#ddd\"/>\n"
                      "<text x=\"%d\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.1f</text>\n",
                      left, y, width - right, y, left - 6, y + 4, v);
        out << buf;
    }

    for (std::size_t g = 0; g < groups; ++g) {
        double gx = left + group_w * (static_cast<double>(g) + 0.1);
        for (std::size_t s = 0; s < bars; ++s) {
            double v = std::min(std::max(series[s].second[g], 0.0), 1.0);
            double h = plot_h * v;
            std::snprintf(buf, sizeof buf,
                          "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n",
                          gx + bar_w * static_cast<double>(s), top + plot_h - h, bar_w * 0.92, h,
                          kPalette[s % 6]);
            out << buf;
            std::snprintf(buf, sizeof buf,
                          "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" text-anchor=\"middle\">%.3f</text>\n",
                          gx + bar_w * (static_cast<double>(s) + 0.5), top + plot_h - h - 4, series[s].second[g]);
            out << buf;
        }
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">%s</text>\n",
                      left + group_w * (static_cast<double>(g) + 0.5), top + plot_h + 20,
                      criteria[g].c_str());
        out << buf;
    }

    // legend
    for (std::size_t s = 0; s < bars; ++s) {
        double lx = left + 140.0 * static_cast<double>(s);
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.1f\" y=\"%d\" width=\"12\" height=\"12\" fill=\"%s\"/>\n"
                      "<text x=\"%.1f\" y=\"%d\" font-size=\"12\">%s</text>\n",
                      lx, height - 28, kPalette[s % 6], lx + 16, height - 18, series[s].first.c_str());
        out << buf;
    }
    out << "</svg>\n";
}

} // namespace gridmtl
