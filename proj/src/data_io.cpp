#include "scope/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"
#include "scope/univariate.hpp"

namespace scope {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_number(const std::string& field) {
  std::string s = trim(field);
  if (!s.empty() && s[0] == '+') s.erase(0, 1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

bool CsvTable::missing(const std::string& field) {
  const std::string t = trim(field);
  return t.empty() || t == "NA";
}

std::size_t CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::invalid_argument("csv: no column named '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

CsvTable parse_csv(std::istream& in) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t i = 0;
  if (text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> rec;
  std::string field;
  bool quoted = false, touched = false;
  std::size_t line = 1;
  auto end_field = [&] {
    rec.push_back(std::move(field));
    field.clear();
    touched = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(rec.size() == 1 && rec[0].empty())) records.push_back(std::move(rec));
    rec.clear();
  };
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (touched || !field.empty())
          throw std::runtime_error("csv: stray quote on line " + std::to_string(line));
        quoted = touched = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') break;
        [[fallthrough]];
      case '\n':
        end_record();
        ++line;
        break;
      default:
        field += c;
    }
  }
  if (quoted) throw std::runtime_error("csv: unterminated quoted field");
  if (touched || !field.empty() || !rec.empty()) end_record();

  CsvTable t;
  if (records.empty()) throw std::runtime_error("csv: no header row");
  t.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != t.header.size())
      throw std::runtime_error("csv: record " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                               " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields) {
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (k) os << ',';
    const auto& f = fields[k];
    if (f.find_first_of(",\"\r\n") != std::string::npos) {
      os << '"';
      for (char c : f) {
        if (c == '"') os << '"';
        os << c;
      }
      os << '"';
    } else {
      os << f;
    }
  }
  os << '\n';
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Dataset read_csv(std::istream& in, const SchemaHints& hints) {
  const CsvTable t = parse_csv(in);
  if (t.rows.empty()) throw std::runtime_error("csv: no data rows");
  for (std::size_t a = 0; a < t.header.size(); ++a)
    for (std::size_t b = a + 1; b < t.header.size(); ++b)
      if (t.header[a] == t.header[b]) throw std::runtime_error("csv: duplicate column '" + t.header[a] + "'");
  for (const auto& [name, kind] : hints.kinds) {
    t.column(name);
    if (kind == ColumnKind::response && name != hints.response)
      throw std::invalid_argument("csv: column '" + name + "' hinted as response but the response is '" +
                                  hints.response + "'");
  }
  if (std::find(t.header.begin(), t.header.end(), hints.response) == t.header.end())
    throw std::runtime_error("csv: response column '" + hints.response + "' missing");

  Dataset ds;
  std::vector<std::size_t> src;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const auto& name = t.header[c];
    if (std::find(hints.drop.begin(), hints.drop.end(), name) != hints.drop.end()) {
      if (name == hints.response) throw std::invalid_argument("csv: cannot drop the response column");
      continue;
    }
    ColumnKind kind;
    if (name == hints.response) {
      kind = ColumnKind::response;
    } else if (auto it = hints.kinds.find(name); it != hints.kinds.end()) {
      kind = it->second;
    } else {
      bool numeric = true;
      for (const auto& row : t.rows)
        if (!CsvTable::missing(row[c]) && !parse_number(row[c])) {
          numeric = false;
          break;
        }
      kind = numeric ? ColumnKind::continuous : ColumnKind::categorical;
    }
    ds.schema.push_back({name, kind});
    src.push_back(c);
  }

  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    bool ok = true;
    for (std::size_t c : src) ok = ok && !CsvTable::missing(t.rows[r][c]);
    if (ok)
      keep.push_back(r);
    else
      ++ds.dropped_rows;
  }
  if (keep.empty()) throw std::runtime_error("csv: every row has a missing value");

  Design& d = ds.design;
  d.n = keep.size();
  std::size_t ncont = 0;
  for (const auto& s : ds.schema) ncont += s.kind == ColumnKind::continuous;
  d.continuous.resize(static_cast<Eigen::Index>(d.n), static_cast<Eigen::Index>(ncont));
  ds.y.resize(d.n);
  std::size_t cc = 0;
  for (std::size_t s = 0; s < ds.schema.size(); ++s) {
    const auto& col = ds.schema[s];
    const std::size_t c = src[s];
    if (col.kind == ColumnKind::categorical) {
      CategoricalVar v;
      v.name = col.name;
      v.codes.reserve(d.n);
      std::unordered_map<std::string, int> ids;
      std::vector<std::size_t> count;
      for (std::size_t r : keep) {
        const auto& label = t.rows[r][c];
        auto [it, fresh] = ids.emplace(label, static_cast<int>(v.labels.size()));
        if (fresh) {
          v.labels.push_back(label);
          count.push_back(0);
        }
        ++count[static_cast<std::size_t>(it->second)];
        v.codes.push_back(it->second);
      }
      if (std::find(count.begin(), count.end(), std::size_t{1}) != count.end())
        ds.single_observation.push_back(col.name);
      d.categorical.push_back(std::move(v));
      continue;
    }
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const auto& field = t.rows[keep[i]][c];
      const auto v = parse_number(field);
      if (!v)
        throw std::runtime_error("csv: column '" + col.name + "' row " + std::to_string(keep[i] + 1) +
                                 ": not a number: '" + field + "'");
      if (col.kind == ColumnKind::response)
        ds.y[i] = *v;
      else
        d.continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cc)) = *v;
    }
    if (col.kind == ColumnKind::continuous) {
      d.continuous_names.push_back(col.name);
      ++cc;
    }
  }
  return ds;
}

Dataset read_csv(const std::string& path, const SchemaHints& hints) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return read_csv(in, hints);
}

void write_csv(std::ostream& os, const Dataset& ds) {
  std::vector<std::string> fields;
  for (const auto& s : ds.schema) fields.push_back(s.name);
  write_csv_row(os, fields);
  for (std::size_t i = 0; i < ds.design.n; ++i) {
    fields.clear();
    std::size_t cat = 0, cont = 0;
    for (const auto& s : ds.schema) {
      switch (s.kind) {
        case ColumnKind::categorical: {
          const auto& v = ds.design.categorical[cat++];
          fields.push_back(v.labels[static_cast<std::size_t>(v.codes[i])]);
          break;
        }
        case ColumnKind::continuous:
          fields.push_back(
              format_double(ds.design.continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cont++))));
          break;
        case ColumnKind::response:
          fields.push_back(format_double(ds.y[i]));
          break;
      }
    }
    write_csv_row(os, fields);
  }
}

std::string ModelFile::schema_fingerprint() const {
  std::string canon = family_name(family);
  canon += '\x1e';
  canon += response;
  for (std::size_t j = 0; j < categorical_names.size(); ++j) {
    canon += '\x1e';
    canon += categorical_names[j];
    for (const auto& l : levels[j]) {
      canon += '\x1f';
      canon += l;
    }
  }
  for (const auto& c : continuous_names) {
    canon += '\x1d';
    canon += c;
  }
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ModelFile make_model(const Design& d, const std::string& response, Family family, double gamma, double lambda,
                     const FitResult& fit) {
  ModelFile m;
  m.family = family;
  m.response = response;
  m.gamma = gamma;
  m.lambda = lambda;
  for (const auto& v : d.categorical) {
    m.categorical_names.push_back(v.name);
    m.levels.push_back(v.labels);
  }
  m.continuous_names = d.continuous_names;
  m.hierarchy = d.hierarchy;
  m.coef = fit.coef;
  for (const auto& th : fit.coef.theta) m.clusters.push_back(cluster_ids(th));
  m.sweeps = fit.sweeps;
  m.converged = fit.converged;
  m.objective = fit.objective;
  m.fingerprint = m.schema_fingerprint();
  return m;
}

namespace {

using nlohmann::json;

std::string jstr(const std::string& s) { return json(s).dump(-1, ' ', false, json::error_handler_t::replace); }

std::string jnum(double x) {
  if (!std::isfinite(x)) throw std::domain_error("model: non-finite value cannot be serialised");
  if (x == 0.0) x = 0.0;  // drop the sign of zero
  return format_double(x);
}

template <typename T, typename F>
std::string jlist(const std::vector<T>& xs, F f) {
  std::string out = "[";
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ", ";
    out += f(xs[k]);
  }
  return out + "]";
}

}  // namespace

std::string serialize_model(const ModelFile& m) {
  const std::size_t p = m.categorical_names.size();
  if (m.levels.size() != p || m.coef.theta.size() != p || m.clusters.size() != p)
    throw std::invalid_argument("model: inconsistent categorical blocks");
  if (m.coef.beta.size() != m.continuous_names.size())
    throw std::invalid_argument("model: inconsistent continuous block");
  auto istr = [](auto x) { return std::to_string(x); };

  std::ostringstream os;
  os << "{\n";
  os << "  \"format\": \"scope-model\",\n";
  os << "  \"version\": " << m.version << ",\n";
  os << "  \"fingerprint\": " << jstr(m.fingerprint) << ",\n";
  os << "  \"family\": " << jstr(family_name(m.family)) << ",\n";
  os << "  \"response\": " << jstr(m.response) << ",\n";
  os << "  \"gamma\": " << jnum(m.gamma) << ",\n";
  os << "  \"lambda\": " << jnum(m.lambda) << ",\n";
  os << "  \"intercept\": " << jnum(m.coef.mu) << ",\n";
  os << "  \"categorical\": [";
  for (std::size_t j = 0; j < p; ++j) {
    if (m.levels[j].size() != m.coef.theta[j].size() || m.clusters[j].size() != m.levels[j].size())
      throw std::invalid_argument("model: block " + std::to_string(j) + " has inconsistent sizes");
    os << (j ? ",\n" : "\n") << "    {\"name\": " << jstr(m.categorical_names[j])
       << ", \"labels\": " << jlist(m.levels[j], jstr) << ", \"theta\": " << jlist(m.coef.theta[j], jnum)
       << ", \"clusters\": " << jlist(m.clusters[j], istr) << "}";
  }
  os << (p ? "\n  ],\n" : "],\n");
  os << "  \"continuous\": [";
  for (std::size_t l = 0; l < m.continuous_names.size(); ++l)
    os << (l ? ",\n" : "\n") << "    {\"name\": " << jstr(m.continuous_names[l]) << ", \"beta\": " << jnum(m.coef.beta[l])
       << "}";
  os << (m.continuous_names.empty() ? "],\n" : "\n  ],\n");
  os << "  \"hierarchy\": ";
  if (m.hierarchy)
    os << "{\"parent\": " << m.hierarchy->parent << ", \"child\": " << m.hierarchy->child
       << ", \"parent_of\": " << jlist(m.hierarchy->parent_of, istr) << "},\n";
  else
    os << "null,\n";
  os << "  \"fit\": {\"sweeps\": " << m.sweeps << ", \"converged\": " << (m.converged ? "true" : "false")
     << ", \"objective\": " << jnum(m.objective) << "}\n";
  os << "}\n";
  return os.str();
}

ModelFile deserialize_model(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("model: malformed document: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "scope-model") throw std::runtime_error("model: unknown format");
    ModelFile m;
    m.version = j.at("version").get<int>();
    if (m.version != ModelFile::kVersion)
      throw std::runtime_error("model: version " + std::to_string(m.version) + " not supported (expected " +
                               std::to_string(ModelFile::kVersion) + ")");
    m.fingerprint = j.at("fingerprint").get<std::string>();
    m.family = parse_family(j.at("family").get<std::string>());
    m.response = j.at("response").get<std::string>();
    m.gamma = j.at("gamma").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.coef.mu = j.at("intercept").get<double>();
    for (const auto& b : j.at("categorical")) {
      m.categorical_names.push_back(b.at("name").get<std::string>());
      m.levels.push_back(b.at("labels").get<std::vector<std::string>>());
      m.coef.theta.push_back(b.at("theta").get<std::vector<double>>());
      m.clusters.push_back(b.at("clusters").get<std::vector<int>>());
      if (m.levels.back().size() != m.coef.theta.back().size() || m.clusters.back().size() != m.levels.back().size())
        throw std::runtime_error("model: block '" + m.categorical_names.back() + "' has inconsistent sizes");
    }
    for (const auto& b : j.at("continuous")) {
      m.continuous_names.push_back(b.at("name").get<std::string>());
      m.coef.beta.push_back(b.at("beta").get<double>());
    }
    if (const auto& h = j.at("hierarchy"); !h.is_null())
      m.hierarchy = Hierarchy{h.at("parent").get<std::size_t>(), h.at("child").get<std::size_t>(),
                              h.at("parent_of").get<std::vector<int>>()};
    const auto& f = j.at("fit");
    m.sweeps = f.at("sweeps").get<std::size_t>();
    m.converged = f.at("converged").get<bool>();
    m.objective = f.at("objective").get<double>();
    if (m.fingerprint != m.schema_fingerprint()) throw std::runtime_error("model: schema fingerprint mismatch");
    return m;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("model: ") + e.what());
  }
}

void save_model(const std::string& path, const ModelFile& m) {
  const std::string text = serialize_model(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return deserialize_model(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

Encoded encode_for_model(const CsvTable& table, const ModelFile& m) {
  auto require = [&](const std::string& name) {
    const auto it = std::find(table.header.begin(), table.header.end(), name);
    if (it == table.header.end())
      throw std::runtime_error("schema mismatch: column '" + name + "' required by the model is missing");
    return static_cast<std::size_t>(it - table.header.begin());
  };
  std::vector<std::size_t> cat_col, cont_col;
  for (const auto& n : m.categorical_names) cat_col.push_back(require(n));
  for (const auto& n : m.continuous_names) cont_col.push_back(require(n));
  const auto resp_it = std::find(table.header.begin(), table.header.end(), m.response);
  const bool has_y = resp_it != table.header.end();
  const std::size_t resp_col = static_cast<std::size_t>(resp_it - table.header.begin());

  std::vector<std::unordered_map<std::string, int>> dict(m.levels.size());
  for (std::size_t j = 0; j < m.levels.size(); ++j)
    for (std::size_t k = 0; k < m.levels[j].size(); ++k) dict[j].emplace(m.levels[j][k], static_cast<int>(k));

  Encoded e;
  std::vector<std::vector<int>> codes(m.levels.size());
  std::vector<std::vector<double>> cont;
  std::vector<double> y;
  bool y_ok = has_y;
  std::vector<std::size_t> unseen(m.levels.size(), 0);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    bool ok = true;
    for (std::size_t c : cat_col) ok = ok && !CsvTable::missing(row[c]);
    std::vector<double> z;
    for (std::size_t c : cont_col) {
      const auto v = CsvTable::missing(row[c]) ? std::nullopt : parse_number(row[c]);
      if (!v) ok = false;
      z.push_back(v.value_or(0.0));
    }
    if (!ok) {
      e.notes.push_back("row " + std::to_string(r + 1) + ": missing or non-numeric input, skipped");
      continue;
    }
    for (std::size_t j = 0; j < cat_col.size(); ++j) {
      const auto it = dict[j].find(row[cat_col[j]]);
      codes[j].push_back(it == dict[j].end() ? -1 : it->second);
      if (it == dict[j].end()) ++unseen[j];
    }
    cont.push_back(std::move(z));
    if (y_ok) {
      const auto v = parse_number(row[resp_col]);
      if (v)
        y.push_back(*v);
      else
        y_ok = false;
    }
    e.rows.push_back(r);
  }
  for (std::size_t j = 0; j < unseen.size(); ++j)
    if (unseen[j])
      e.notes.push_back("column '" + m.categorical_names[j] + "': " + std::to_string(unseen[j]) +
                        " rows with levels unseen in training (effect 0)");
  if (has_y && !y_ok) e.notes.push_back("response column present but not numeric everywhere; ignored");

  Design& d = e.design;
  d.n = e.rows.size();
  for (std::size_t j = 0; j < m.levels.size(); ++j)
    d.categorical.push_back(CategoricalVar{m.categorical_names[j], std::move(codes[j]), m.levels[j]});
  d.continuous.resize(static_cast<Eigen::Index>(d.n), static_cast<Eigen::Index>(m.continuous_names.size()));
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t l = 0; l < m.continuous_names.size(); ++l)
      d.continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = cont[i][l];
  d.continuous_names = m.continuous_names;
  if (y_ok) e.y = std::move(y);
  return e;
}

}  // namespace scope
