#include "lmdrop/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "lmdrop/errors.hpp"

namespace lmdrop {

std::string_view to_string(Family f) {
  return f == Family::gaussian ? "gaussian" : "bernoulli";
}

std::string_view to_string(Link l) {
  switch (l) {
    case Link::identity: return "identity";
    case Link::logit: return "logit";
    case Link::cloglog: return "cloglog";
  }
  return "?";
}

Family parse_family(std::string_view s) {
  if (s == "gaussian") return Family::gaussian;
  if (s == "bernoulli") return Family::bernoulli;
  throw SchemaError("unknown family '" + std::string(s) + "'");
}

Link parse_link(std::string_view s) {
  if (s == "identity") return Link::identity;
  if (s == "logit") return Link::logit;
  if (s == "cloglog") return Link::cloglog;
  throw SchemaError("unknown link '" + std::string(s) + "'");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

// Empty cells parse to NaN; anything else must be a full numeric token.
double parse_number(const std::string& cell, bool* ok) {
  const std::string t = trim(cell);
  *ok = true;
  if (t.empty()) return kNaN;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    *ok = false;
    return kNaN;
  }
  return v;
}

bool is_integer_id(const std::string& s) {
  if (s.empty() || s.size() > 18) return false;
  std::size_t i = (s[0] == '-') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i)
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  return true;
}

std::string format_cell(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

int PanelDataset::max_t() const {
  int m = 0;
  for (const auto& sub : subjects) m = std::max(m, sub.t);
  return m;
}

PanelSchema PanelDataset::schema() const {
  PanelSchema sc;
  sc.id_column = id_column;
  sc.occasion_column = occasion_column;
  for (int h = 0; h < r(); ++h)
    sc.channels.push_back({channel_names[h], channel_families[h], channel_covariate_names[h]});
  sc.hazard_covariates = hazard_covariate_names;
  sc.horizon = s;
  return sc;
}

void validate_panel(const PanelDataset& data) {
  if (data.s < 1) throw SchemaError("horizon s must be >= 1");
  if (data.r() < 1) throw SchemaError("at least one outcome channel is required");
  if (static_cast<int>(data.channel_families.size()) != data.r() ||
      static_cast<int>(data.channel_covariate_names.size()) != data.r())
    throw SchemaError("channel metadata has inconsistent length");
  for (const auto& sub : data.subjects) {
    const std::string who = "subject '" + sub.id + "'";
    if (sub.t < 1 || sub.t > data.s)
      throw SchemaError(who + ": observed occasions " + std::to_string(sub.t) +
                        " outside 1.." + std::to_string(data.s));
    if (sub.y.rows() != sub.t || sub.y.cols() != data.r())
      throw SchemaError(who + ": outcome block has wrong shape");
    if (static_cast<int>(sub.x.size()) != data.r())
      throw SchemaError(who + ": wrong number of channel designs");
    for (int h = 0; h < data.r(); ++h) {
      const auto p = static_cast<Eigen::Index>(data.channel_covariate_names[h].size());
      if (sub.x[h].rows() != sub.t || sub.x[h].cols() != p)
        throw SchemaError(who + ": covariate arity mismatch for channel " + data.channel_names[h]);
      if (!sub.x[h].allFinite())
        throw DomainError(who + ": non-finite covariate for channel " + data.channel_names[h]);
      for (int t = 0; t < sub.t; ++t) {
        const double v = sub.y(t, h);
        if (!std::isfinite(v))
          throw DomainError(who + ": non-finite outcome in " + data.channel_names[h]);
        if (data.channel_families[h] == Family::bernoulli && v != 0.0 && v != 1.0)
          throw DomainError(who + ": non-binary value " + format_cell(v) + " in binary channel " +
                            data.channel_names[h]);
      }
    }
    if (sub.z.rows() != sub.t || sub.z.cols() != data.q())
      throw SchemaError(who + ": hazard covariate arity mismatch");
    for (int t = 1; t <= std::min(sub.t, data.s - 1); ++t)
      if (!sub.z.row(t - 1).allFinite())
        throw DomainError(who + ": missing hazard covariate at occasion " + std::to_string(t));
  }
}

PanelDataset load_panel(const std::filesystem::path& path, const PanelSchema& schema) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open data file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty data file " + path.string());
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, int> col;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) col[trim(header[j])] = j;
  const auto find = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("column '" + name + "' not found in header");
    return it->second;
  };

  const int id_col = find(schema.id_column);
  const int occ_col = find(schema.occasion_column);
  const int r = static_cast<int>(schema.channels.size());
  if (r < 1) throw SchemaError("schema declares no outcome channels");
  std::vector<int> y_cols;
  std::vector<std::vector<int>> x_cols;
  for (const auto& ch : schema.channels) {
    y_cols.push_back(find(ch.name));
    std::vector<int> xs;
    for (const auto& c : ch.covariates) xs.push_back(find(c));
    x_cols.push_back(std::move(xs));
  }
  std::vector<int> z_cols;
  for (const auto& c : schema.hazard_covariates) z_cols.push_back(find(c));

  struct Row {
    int occasion;
    std::vector<double> y;
    std::vector<std::vector<double>> x;
    std::vector<double> z;
  };
  std::map<std::string, std::vector<Row>> by_subject;

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw SchemaError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, found " +
                        std::to_string(cells.size()));
    const auto num = [&](int j, const std::string& what) {
      bool ok = false;
      const double v = parse_number(cells[j], &ok);
      if (!ok)
        throw DomainError("line " + std::to_string(line_no) + ": non-numeric " + what + " '" +
                          cells[j] + "'");
      return v;
    };
    Row row;
    const double occ = num(occ_col, "occasion");
    if (!std::isfinite(occ) || occ != std::floor(occ) || occ < 1)
      throw DomainError("line " + std::to_string(line_no) + ": invalid occasion '" +
                        cells[occ_col] + "'");
    row.occasion = static_cast<int>(occ);
    for (int h = 0; h < r; ++h) {
      row.y.push_back(num(y_cols[h], "outcome"));
      std::vector<double> xs;
      for (int j : x_cols[h]) xs.push_back(num(j, "covariate"));
      row.x.push_back(std::move(xs));
    }
    for (int j : z_cols) row.z.push_back(num(j, "hazard covariate"));
    by_subject[trim(cells[id_col])].push_back(std::move(row));
  }

  PanelDataset data;
  data.id_column = schema.id_column;
  data.occasion_column = schema.occasion_column;
  for (const auto& ch : schema.channels) {
    data.channel_names.push_back(ch.name);
    data.channel_families.push_back(ch.family);
    data.channel_covariate_names.push_back(ch.covariates);
  }
  data.hazard_covariate_names = schema.hazard_covariates;

  int max_occ = 0;
  for (auto& [id, rows] : by_subject) {
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.occasion < b.occasion; });
    for (std::size_t j = 0; j < rows.size(); ++j) {
      if (rows[j].occasion != static_cast<int>(j) + 1) {
        if (j > 0 && rows[j].occasion == rows[j - 1].occasion)
          throw SchemaError("subject '" + id + "': duplicate occasion " +
                            std::to_string(rows[j].occasion));
        throw GapError("subject '" + id + "': occasion " + std::to_string(j + 1) +
                       " missing (next observed is " + std::to_string(rows[j].occasion) + ")");
      }
    }
    max_occ = std::max(max_occ, static_cast<int>(rows.size()));
  }
  data.s = schema.horizon.value_or(max_occ);
  if (max_occ > data.s)
    throw SchemaError("occasion " + std::to_string(max_occ) + " exceeds horizon " +
                      std::to_string(data.s));

  std::vector<std::string> ids;
  for (const auto& kv : by_subject) ids.push_back(kv.first);
  if (std::all_of(ids.begin(), ids.end(), is_integer_id))
    std::stable_sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
      return std::stoll(a) < std::stoll(b);
    });

  for (const auto& id : ids) {
    const auto& rows = by_subject.at(id);
    SubjectRecord sub;
    sub.id = id;
    sub.t = static_cast<int>(rows.size());
    sub.y.resize(sub.t, r);
    sub.x.resize(r);
    for (int h = 0; h < r; ++h) sub.x[h].resize(sub.t, static_cast<Eigen::Index>(x_cols[h].size()));
    sub.z.resize(sub.t, static_cast<Eigen::Index>(z_cols.size()));
    for (int t = 0; t < sub.t; ++t) {
      for (int h = 0; h < r; ++h) {
        sub.y(t, h) = rows[t].y[h];
        for (std::size_t j = 0; j < x_cols[h].size(); ++j) sub.x[h](t, j) = rows[t].x[h][j];
      }
      for (std::size_t j = 0; j < z_cols.size(); ++j) sub.z(t, j) = rows[t].z[j];
    }
    data.subjects.push_back(std::move(sub));
  }
  validate_panel(data);
  return data;
}

void write_panel(const PanelDataset& data, const std::filesystem::path& path) {
  // Each distinct covariate name is written once; a channel occurrence wins over
  // the hazard one because channel designs are complete at every occasion.
  struct Source {
    int channel;  // -1 for hazard
    int column;
  };
  std::vector<std::string> names;
  std::map<std::string, Source> source;
  for (int h = 0; h < data.r(); ++h)
    for (int j = 0; j < static_cast<int>(data.channel_covariate_names[h].size()); ++j) {
      const auto& nm = data.channel_covariate_names[h][j];
      if (source.emplace(nm, Source{h, j}).second) names.push_back(nm);
    }
  for (int j = 0; j < data.q(); ++j) {
    const auto& nm = data.hazard_covariate_names[j];
    if (source.emplace(nm, Source{-1, j}).second) names.push_back(nm);
  }

  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write " + path.string());
  out << data.id_column << ',' << data.occasion_column;
  for (const auto& c : data.channel_names) out << ',' << c;
  for (const auto& c : names) out << ',' << c;
  out << '\n';
  for (const auto& sub : data.subjects) {
    for (int t = 0; t < sub.t; ++t) {
      out << sub.id << ',' << (t + 1);
      for (int h = 0; h < data.r(); ++h) out << ',' << format_cell(sub.y(t, h));
      for (const auto& nm : names) {
        const Source src = source.at(nm);
        const double v = src.channel >= 0 ? sub.x[src.channel](t, src.column) : sub.z(t, src.column);
        out << ',' << format_cell(v);
      }
      out << '\n';
    }
  }
}

std::pair<PanelDataset, CenteringReport> center_continuous(const PanelDataset& data,
                                                           const std::vector<std::string>& which) {
  PanelDataset out = data;
  CenteringReport report;
  for (const auto& name : which) {
    std::vector<std::pair<int, int>> where;  // (channel or -1, column)
    for (int h = 0; h < data.r(); ++h)
      for (int j = 0; j < static_cast<int>(data.channel_covariate_names[h].size()); ++j)
        if (data.channel_covariate_names[h][j] == name) where.emplace_back(h, j);
    for (int j = 0; j < data.q(); ++j)
      if (data.hazard_covariate_names[j] == name) where.emplace_back(-1, j);
    if (where.empty()) throw SchemaError("cannot center unknown covariate '" + name + "'");

    // Mean over every observed row where the value is present.
    const auto [h0, j0] = where.front();
    double sum = 0.0;
    long count = 0;
    for (const auto& sub : data.subjects)
      for (int t = 0; t < sub.t; ++t) {
        const double v = h0 >= 0 ? sub.x[h0](t, j0) : sub.z(t, j0);
        if (std::isfinite(v)) {
          sum += v;
          ++count;
        }
      }
    const double mean = count > 0 ? sum / static_cast<double>(count) : 0.0;
    for (auto& sub : out.subjects)
      for (const auto& [h, j] : where) {
        auto col = h >= 0 ? sub.x[h].col(j) : sub.z.col(j);
        col.array() -= mean;
      }
    report.means.emplace_back(name, mean);
  }
  return {std::move(out), std::move(report)};
}

std::vector<std::pair<int, double>> dropout_summary(const PanelDataset& data) {
  std::vector<long> counts(static_cast<std::size_t>(data.s), 0);
  for (const auto& sub : data.subjects) ++counts[static_cast<std::size_t>(sub.t - 1)];
  std::vector<std::pair<int, double>> table;
  const double n = std::max(1, data.n());
  for (int t = 1; t <= data.s; ++t)
    table.emplace_back(t, static_cast<double>(counts[static_cast<std::size_t>(t - 1)]) / n);
  return table;
}

}  // namespace lmdrop
