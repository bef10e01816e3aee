#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "potrl/error.hpp"
#include "potrl/format.hpp"
#include "potrl/harness.hpp"

namespace potrl {
namespace {

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double ParseNumber(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": expected a number, got '" + text + "'");
  }
}

long ParseInteger(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    long v = std::stol(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": expected an integer, got '" + text + "'");
  }
}

std::string OptionalText(const std::optional<double>& v) {
  return v ? FormatDouble(*v) : std::string();
}

std::vector<std::string> Lines(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string ReadText(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<double> Ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::string RewardCsvLine(const StepRecord& record) {
  std::string line = std::to_string(record.step) + "," +
                     std::to_string(record.episode) + "," +
                     FormatDouble(record.reward) + ",";
  if (record.info) {
    const StepInfo& info = *record.info;
    const TaskOutcome& counts = info.counts();
    line += OptionalText(info.pour_reward) + "," + OptionalText(info.shake_reward) +
            "," + std::to_string(counts.n_cup) + "," + std::to_string(counts.n_pot) +
            "," + std::to_string(counts.n_spilled);
  } else {
    line += ",,0,0,0";
  }
  return line;
}

std::vector<RewardRow> ParseRewardCsv(const std::string& text) {
  std::vector<std::string> lines = Lines(text);
  if (lines.empty() || lines.front() != kRewardCsvHeader) {
    throw ParseError(std::string("reward CSV: line 1: expected header '") +
                     kRewardCsvHeader + "'");
  }
  std::vector<RewardRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = "reward CSV: line " + std::to_string(i + 1);
    std::vector<std::string> f = SplitCsv(lines[i]);
    if (f.size() != 8) throw ParseError(where + ": expected 8 fields");
    RewardRow row;
    row.step = ParseInteger(f[0], where + ", step");
    row.episode = static_cast<int>(ParseInteger(f[1], where + ", episode"));
    row.reward = ParseNumber(f[2], where + ", reward");
    if (!f[3].empty()) row.pour_reward = ParseNumber(f[3], where + ", pour_r");
    if (!f[4].empty()) row.shake_reward = ParseNumber(f[4], where + ", shake_r");
    row.n_cup = static_cast<int>(ParseInteger(f[5], where + ", n_cup"));
    row.n_pot = static_cast<int>(ParseInteger(f[6], where + ", n_pot"));
    row.n_spilled = static_cast<int>(ParseInteger(f[7], where + ", n_spilled"));
    rows.push_back(row);
  }
  return rows;
}

std::vector<RewardRow> ReadRewardCsv(const std::filesystem::path& path) {
  return ParseRewardCsv(ReadText(path));
}

std::string RenderRewardPlot(const std::vector<RewardRow>& rows,
                             const std::string& title) {
  if (rows.empty()) throw UsageError("cannot plot an empty reward series");
  constexpr double kWidth = 800, kHeight = 400;
  constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  double y_min = 0.0, y_max = 1.0;
  for (const RewardRow& r : rows) {
    y_min = std::min(y_min, r.reward);
    y_max = std::max(y_max, r.reward);
  }
  const double x_first = static_cast<double>(rows.front().step);
  const double x_last = static_cast<double>(rows.back().step);
  auto px = [&](double step) {
    if (x_last == x_first) return kLeft + 0.5 * plot_w;
    return kLeft + (step - x_first) / (x_last - x_first) * plot_w;
  };
  auto py = [&](double reward) {
    return kTop + (y_max - reward) / (y_max - y_min) * plot_h;
  };
  auto fmt = [](double v) { return FormatFixed(v, 2); };

  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].reward > rows[best].reward) best = i;
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
      << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
      << kHeight << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";
  // axes
  svg << "<g stroke=\"black\" stroke-width=\"1\">\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
      << "\" y2=\"" << kTop + plot_h << "\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\""
      << kLeft + plot_w << "\" y2=\"" << kTop + plot_h << "\"/>\n";
  svg << "</g>\n";
  svg << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = y_min + (y_max - y_min) * k / 4.0;
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(py(v) + 4)
        << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  svg << "<text x=\"" << kLeft << "\" y=\"" << kTop + plot_h + 16
      << "\" text-anchor=\"middle\">" << rows.front().step << "</text>\n";
  if (rows.size() > 1) {
    svg << "<text x=\"" << kLeft + plot_w << "\" y=\"" << kTop + plot_h + 16
        << "\" text-anchor=\"middle\">" << rows.back().step << "</text>\n";
  }
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">step</text>\n";
  svg << "<text x=\"16\" y=\"" << kTop + plot_h / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << kTop + plot_h / 2 << ")\">reward</text>\n";
  svg << "</g>\n";

  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].episode == rows[i - 1].episode) continue;
    const std::string x = fmt(px(static_cast<double>(rows[i].step)));
    svg << "<line class=\"episode-boundary\" data-step=\"" << rows[i].step
        << "\" x1=\"" << x << "\" y1=\"" << kTop << "\" x2=\"" << x
        << "\" y2=\"" << kTop + plot_h
        << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }

  svg << "<polyline class=\"reward\" fill=\"none\" stroke=\"steelblue\" "
         "stroke-width=\"1.2\" points=\"";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) svg << ' ';
    svg << fmt(px(static_cast<double>(rows[i].step))) << ','
        << fmt(py(rows[i].reward));
  }
  svg << "\"/>\n";

  const RewardRow& b = rows[best];
  svg << "<circle class=\"best-step\" data-step=\"" << b.step << "\" cx=\""
      << fmt(px(static_cast<double>(b.step))) << "\" cy=\"" << fmt(py(b.reward))
      << "\" r=\"5\" fill=\"none\" stroke=\"crimson\" stroke-width=\"2\"/>\n";
  svg << "<text x=\"" << kLeft + plot_w << "\" y=\"" << kTop - 6
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
         "fill=\"crimson\">best "
      << FormatFixed(b.reward, 3) << " at step " << b.step << " (episode "
      << b.episode << ")</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

std::string SummaryText(const RunSummary& s) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json doc = {
      {"env", s.env},
      {"weight", s.weight},
      {"seed", s.seed},
      {"steps", s.steps},
      {"initial",
       {{"reward", s.initial_reward},
        {"pour_r", opt(s.initial_pour_reward)},
        {"shake_r", opt(s.initial_shake_reward)}}},
      {"best",
       {{"reward", s.best_reward},
        {"step", s.best_step},
        {"episode", s.best_episode},
        {"step_in_episode", s.best_step_in_episode},
        {"pour_r", opt(s.best_pour_reward)},
        {"shake_r", opt(s.best_shake_reward)},
        {"radius_scales", s.best_radius_scales}}},
      {"episode_best_rewards", s.episode_best_rewards},
      {"aborted", s.aborted},
      {"abort_reason", s.abort_reason},
  };
  return doc.dump(2) + "\n";
}

bool SweepRowConsistent(const SweepRow& row, double tolerance) {
  const double expected = row.weight * row.pour + (1.0 - row.weight) * row.shake;
  // Decimal inputs such as 0.82 vs 0.815 sit exactly on the bound; the slack
  // absorbs their binary representation error.
  return std::abs(row.hybrid - expected) <= tolerance + 1e-9;
}

std::string SweepCsv(const SweepResult& result) {
  std::string out = "weight,episode,step,pour,shake,hybrid,error\n";
  for (const SweepRow& r : result.rows) {
    std::string error = r.error;
    std::replace(error.begin(), error.end(), ',', ';');
    std::replace(error.begin(), error.end(), '\n', ' ');
    out += FormatDouble(r.weight) + ",";
    if (r.ok()) {
      out += std::to_string(r.episode) + "," + std::to_string(r.step) + "," +
             FormatDouble(r.pour) + "," + FormatDouble(r.shake) + "," +
             FormatDouble(r.hybrid) + ",\n";
    } else {
      out += ",,,,," + error + "\n";
    }
  }
  return out;
}

std::vector<SweepRow> ParseSweepCsv(const std::string& text) {
  std::vector<std::string> lines = Lines(text);
  if (lines.empty()) throw ParseError("sweep CSV: missing header");
  const std::string header = lines.front();
  const bool with_error = header == "weight,episode,step,pour,shake,hybrid,error";
  if (!with_error && header != "weight,episode,step,pour,shake,hybrid") {
    throw ParseError("sweep CSV: line 1: unexpected header");
  }
  std::vector<SweepRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = "sweep CSV: line " + std::to_string(i + 1);
    std::vector<std::string> f = SplitCsv(lines[i]);
    const std::size_t expected = with_error ? 7 : 6;
    if (f.size() != expected) throw ParseError(where + ": wrong number of fields");
    SweepRow row;
    row.weight = ParseNumber(f[0], where + ", weight");
    if (with_error && !f[6].empty()) {
      row.error = f[6];
    } else {
      row.episode = static_cast<int>(ParseInteger(f[1], where + ", episode"));
      row.step = static_cast<int>(ParseInteger(f[2], where + ", step"));
      row.pour = ParseNumber(f[3], where + ", pour");
      row.shake = ParseNumber(f[4], where + ", shake");
      row.hybrid = ParseNumber(f[5], where + ", hybrid");
    }
    rows.push_back(row);
  }
  return rows;
}

std::string SweepTable(const SweepResult& result, int decimals) {
  std::ostringstream out;
  auto cell = [&](const std::string& s, std::size_t width) {
    out << std::string(width > s.size() ? width - s.size() : 0, ' ') << s;
  };
  const std::size_t w = 9;
  for (const char* h : {"Weight", "Episode", "Step", "Pour", "Shake", "Hybrid"}) {
    cell(h, w);
  }
  out << '\n';
  for (const SweepRow& r : result.rows) {
    cell(FormatFixed(r.weight, 1), w);
    if (!r.ok()) {
      out << "  failed: " << r.error << '\n';
      continue;
    }
    cell(std::to_string(r.episode), w);
    cell(std::to_string(r.step), w);
    cell(FormatFixed(r.pour, decimals), w);
    cell(FormatFixed(r.shake, decimals), w);
    cell(FormatFixed(r.hybrid, decimals), w);
    out << '\n';
  }
  return out.str();
}

double SpearmanCorrelation(const std::vector<double>& x,
                           const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeMismatchError("series differ in length");
  if (x.size() < 2) throw UsageError("rank correlation needs two or more points");
  const std::vector<double> rx = Ranks(x);
  const std::vector<double> ry = Ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw UsageError("rank correlation is undefined for a constant series");
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace potrl
