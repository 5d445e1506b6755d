#include "ucsbi/lp_format.hpp"

#include "ucsbi/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <optional>
#include <sstream>

namespace ucsbi {

namespace {

std::string num17(double x) {
  if (std::isinf(x)) return x > 0 ? "+inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

void write_terms(std::ostringstream& os, const SparseRow& row, const MilpInstance& inst) {
  if (row.size() == 0) {
    os << " 0 " << inst.variables.front().name;
    return;
  }
  for (std::size_t k = 0; k < row.size(); ++k) {
    if (k > 0 && k % 8 == 0) os << "\n  ";
    const double c = row.value[k];
    os << (c < 0 ? " - " : " + ") << num17(std::abs(c)) << ' '
       << inst.variables[static_cast<std::size_t>(row.index[k])].name;
  }
}

const char* relation_text(Relation r) {
  switch (r) {
    case Relation::LessEqual: return "<=";
    case Relation::GreaterEqual: return ">=";
    case Relation::Equal: return "=";
  }
  return "=";
}

std::string lower_case(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorKind::CorruptFile, "LP file: " + what); }

std::optional<double> as_number(const std::string& tok) {
  const std::string t = lower_case(tok);
  if (t == "inf" || t == "+inf" || t == "infinity" || t == "+infinity") return kInf;
  if (t == "-inf" || t == "-infinity") return -kInf;
  if (t.empty()) return std::nullopt;
  const char* b = tok.data();
  const char* e = tok.data() + tok.size();
  if (*b == '+') ++b;
  double v = 0.0;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) return std::nullopt;
  return v;
}

bool is_relation(const std::string& t) {
  return t == "<=" || t == ">=" || t == "=" || t == "<" || t == ">" || t == "=<" || t == "=>";
}

Relation to_relation(const std::string& t) {
  if (t == "<=" || t == "<" || t == "=<") return Relation::LessEqual;
  if (t == ">=" || t == ">" || t == "=>") return Relation::GreaterEqual;
  return Relation::Equal;
}

// Splits on whitespace and isolates operator characters.
std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '<' || c == '>' || c == '=') {
      std::string op(1, c);
      if (i + 1 < text.size() && (text[i + 1] == '=' || text[i + 1] == '<' || text[i + 1] == '>')) op += text[++i];
      out.push_back(op);
      ++i;
      continue;
    }
    if (c == ':' || c == '+' || c == '-') {
      // A sign directly followed by "inf" belongs to the number.
      if (c != ':' && i + 1 < text.size() && std::tolower(static_cast<unsigned char>(text[i + 1])) == 'i') {
        std::size_t j = i + 1;
        while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j]))) ++j;
        out.push_back(text.substr(i, j - i));
        i = j;
        continue;
      }
      out.emplace_back(1, c);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size()) {
      const char d = text[j];
      if (std::isspace(static_cast<unsigned char>(d)) || d == '<' || d == '>' || d == '=' || d == ':') break;
      // Exponent signs stay inside numbers.
      if ((d == '+' || d == '-') && !(j > i && (text[j - 1] == 'e' || text[j - 1] == 'E') &&
                                      std::isdigit(static_cast<unsigned char>(text[i]))))
        break;
      ++j;
    }
    out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

enum class Section { None, Objective, Constraints, Bounds, Binaries, Generals, End };

std::optional<Section> section_keyword(const std::string& line) {
  const std::string l = lower_case(trim(line));
  if (l == "minimize" || l == "minimise" || l == "minimum" || l == "min") return Section::Objective;
  if (l == "subject to" || l == "such that" || l == "st" || l == "s.t.") return Section::Constraints;
  if (l == "bounds" || l == "bound") return Section::Bounds;
  if (l == "binaries" || l == "binary" || l == "bin") return Section::Binaries;
  if (l == "generals" || l == "general" || l == "gen" || l == "integers") return Section::Generals;
  if (l == "end") return Section::End;
  if (l == "maximize" || l == "maximise" || l == "maximum" || l == "max") corrupt("maximization is not supported");
  return std::nullopt;
}

class LpReader {
 public:
  MilpInstance read(const std::string& text) {
    std::map<Section, std::string> body;
    Section current = Section::None;
    std::istringstream in(text);
    std::string line;
    bool ended = false;
    while (std::getline(in, line)) {
      if (auto p = line.find('\\'); p != std::string::npos) line.erase(p);
      if (trim(line).empty()) continue;
      if (auto sec = section_keyword(line)) {
        current = *sec;
        if (current == Section::End) {
          ended = true;
          break;
        }
        continue;
      }
      if (current == Section::None) corrupt("content before the first section: " + line);
      body[current] += line + "\n";
    }
    if (!ended) corrupt("missing End");

    parse_objective(body[Section::Objective]);
    parse_constraints(body[Section::Constraints]);
    parse_bounds(body[Section::Bounds]);
    parse_integers(body[Section::Generals], false);
    parse_integers(body[Section::Binaries], true);
    return std::move(inst_);
  }

 private:
  int column(const std::string& name) {
    auto it = inst_.variable_index.find(name);
    if (it != inst_.variable_index.end()) return it->second;
    if (name.empty() || as_number(name) || is_relation(name)) corrupt("bad column name '" + name + "'");
    return inst_.add_variable(name, 0.0, kInf, false);
  }

  // Parses "[label:] terms"; stops at a relation operator or the end.
  std::size_t parse_terms(const std::vector<std::string>& tok, std::size_t i, SparseRow& row,
                          std::string* label) {
    if (i + 1 < tok.size() && tok[i + 1] == ":") {
      if (label) *label = tok[i];
      i += 2;
    }
    while (i < tok.size() && !is_relation(tok[i])) {
      double sign = 1.0;
      while (i < tok.size() && (tok[i] == "+" || tok[i] == "-")) {
        if (tok[i] == "-") sign = -sign;
        ++i;
      }
      if (i >= tok.size()) corrupt("dangling sign");
      double coef = 1.0;
      if (auto n = as_number(tok[i])) {
        coef = *n;
        ++i;
        if (i >= tok.size() || is_relation(tok[i])) {
          // Constant term on the left-hand side: only "0" is accepted.
          if (coef != 0.0) corrupt("constant terms are not supported");
          break;
        }
      }
      const int col = column(tok[i++]);
      row.add(col, sign * coef);
    }
    return i;
  }

  void parse_objective(const std::string& text) {
    const auto tok = tokenize(text);
    std::string label;
    const std::size_t end = parse_terms(tok, 0, inst_.objective, &label);
    if (end != tok.size()) corrupt("relation in objective");
  }

  void parse_constraints(const std::string& text) {
    const auto tok = tokenize(text);
    std::size_t i = 0;
    while (i < tok.size()) {
      Constraint c;
      i = parse_terms(tok, i, c.row, &c.name);
      if (i >= tok.size()) corrupt("constraint without relation");
      c.relation = to_relation(tok[i++]);
      double sign = 1.0;
      while (i < tok.size() && (tok[i] == "+" || tok[i] == "-")) {
        if (tok[i] == "-") sign = -sign;
        ++i;
      }
      if (i >= tok.size()) corrupt("constraint without right-hand side");
      auto rhs = as_number(tok[i++]);
      if (!rhs) corrupt("bad right-hand side");
      c.rhs = sign * *rhs;
      if (c.name.empty()) c.name = "r" + std::to_string(inst_.constraints.size());
      inst_.constraints.push_back(std::move(c));
    }
  }

  void parse_bounds(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      auto tok = tokenize(line);
      if (tok.empty()) continue;
      if (tok.size() == 2 && lower_case(tok[1]) == "free") {
        auto& v = inst_.variables[static_cast<std::size_t>(column(tok[0]))];
        v.lower = -kInf;
        v.upper = kInf;
        continue;
      }
      if (tok.size() == 5 && is_relation(tok[1]) && is_relation(tok[3])) {
        auto lo = as_number(tok[0]);
        auto hi = as_number(tok[4]);
        if (!lo || !hi) corrupt("bad bound line: " + line);
        auto& v = inst_.variables[static_cast<std::size_t>(column(tok[2]))];
        v.lower = *lo;
        v.upper = *hi;
        continue;
      }
      if (tok.size() == 3 && is_relation(tok[1])) {
        const Relation rel = to_relation(tok[1]);
        if (auto n = as_number(tok[2])) {
          auto& v = inst_.variables[static_cast<std::size_t>(column(tok[0]))];
          if (rel == Relation::LessEqual) v.upper = *n;
          else if (rel == Relation::GreaterEqual) v.lower = *n;
          else v.lower = v.upper = *n;
          continue;
        }
        if (auto n = as_number(tok[0])) {
          auto& v = inst_.variables[static_cast<std::size_t>(column(tok[2]))];
          if (rel == Relation::LessEqual) v.lower = *n;
          else if (rel == Relation::GreaterEqual) v.upper = *n;
          else v.lower = v.upper = *n;
          continue;
        }
      }
      corrupt("bad bound line: " + line);
    }
  }

  void parse_integers(const std::string& text, bool binary) {
    for (const auto& name : tokenize(text)) {
      const bool seen = inst_.variable_index.count(name) > 0;
      auto& v = inst_.variables[static_cast<std::size_t>(column(name))];
      v.integer = true;
      if (binary && !seen) v.upper = 1.0;
      if (binary && v.upper > 1.0) v.upper = 1.0;
    }
  }

  MilpInstance inst_;
};

SolveStatus status_from_name(const std::string& s) {
  if (s == "Optimal") return SolveStatus::Optimal;
  if (s == "Infeasible") return SolveStatus::Infeasible;
  if (s == "TimeLimit") return SolveStatus::TimeLimit;
  return SolveStatus::BackendError;
}

}  // namespace

std::string export_lp(const MilpInstance& inst) {
  std::ostringstream os;
  os << "\\ written by ucsbi\n";
  os << "Minimize\n obj:";
  if (inst.variables.empty()) {
    os << "\nSubject To\nEnd\n";
    return os.str();
  }
  write_terms(os, inst.objective, inst);
  os << "\nSubject To\n";
  for (const auto& c : inst.constraints) {
    os << ' ' << c.name << ':';
    write_terms(os, c.row, inst);
    os << ' ' << relation_text(c.relation) << ' ' << num17(c.rhs) << '\n';
  }
  os << "Bounds\n";
  for (const auto& v : inst.variables) {
    const bool binary = v.integer && v.lower >= 0.0 && v.upper <= 1.0;
    const double def_hi = binary ? 1.0 : kInf;
    if (v.lower == 0.0 && v.upper == def_hi) continue;
    if (std::isinf(v.lower) && v.lower < 0 && std::isinf(v.upper) && v.upper > 0) {
      os << ' ' << v.name << " free\n";
      continue;
    }
    os << ' ' << num17(v.lower) << " <= " << v.name << " <= " << num17(v.upper) << '\n';
  }
  std::vector<const Variable*> generals, binaries;
  for (const auto& v : inst.variables) {
    if (!v.integer) continue;
    (v.lower >= 0.0 && v.upper <= 1.0 ? binaries : generals).push_back(&v);
  }
  auto list = [&](const char* title, const std::vector<const Variable*>& vars) {
    if (vars.empty()) return;
    os << title << '\n';
    for (std::size_t k = 0; k < vars.size(); ++k) os << (k % 10 == 0 ? (k ? "\n " : " ") : " ") << vars[k]->name;
    os << '\n';
  };
  list("Generals", generals);
  list("Binaries", binaries);
  os << "End\n";
  return os.str();
}

MilpInstance parse_lp(const std::string& text) { return LpReader().read(text); }

std::string write_native_solution(const MilpInstance& inst, const MilpSolution& sol) {
  std::ostringstream os;
  os << "status=" << to_string(sol.status) << '\n';
  os << "objective=" << num17(sol.objective) << '\n';
  if (sol.primal.size() == inst.column_count())
    for (std::size_t j = 0; j < inst.column_count(); ++j)
      os << inst.variables[j].name << '=' << num17(sol.primal[j]) << '\n';
  return os.str();
}

NamedSolution parse_native_solution(const std::string& text) {
  NamedSolution out;
  std::istringstream in(text);
  std::string line;
  bool have_status = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::BackendError, "solution line without '=': " + line);
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "status") {
      out.status = status_from_name(val);
      have_status = true;
      continue;
    }
    auto num = as_number(val);
    if (!num) throw Error(ErrorKind::BackendError, "bad number in solution: " + line);
    if (key == "objective") out.objective = *num;
    else out.values[key] = *num;
  }
  if (!have_status) throw Error(ErrorKind::BackendError, "solution file has no status line");
  return out;
}

NamedSolution parse_cbc_solution(const std::string& text, const std::string& binary, std::size_t row_count) {
  NamedSolution out;
  std::istringstream in(text);
  std::string header;
  if (!std::getline(in, header)) throw Error(ErrorKind::BackendError, "empty CBC solution file");
  out.message = trim(header);
  const std::string h = lower_case(header);
  if (h.rfind("optimal", 0) == 0) out.status = SolveStatus::Optimal;
  else if (h.find("infeasible") != std::string::npos) out.status = SolveStatus::Infeasible;
  else if (h.find("stopped on time") != std::string::npos) out.status = SolveStatus::TimeLimit;
  else out.status = SolveStatus::BackendError;
  if (auto p = h.find("objective value"); p != std::string::npos)
    if (auto n = as_number(trim(header.substr(p + std::strlen("objective value"))))) out.objective = *n;

  // Columns in CBC order, with their 8-digit printed values as a fallback.
  std::vector<std::pair<std::string, double>> columns;
  std::string line;
  std::size_t entry = 0;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "**") ls >> first;  // infeasibility marker
    std::string name, value;
    if (!(ls >> name >> value)) throw Error(ErrorKind::BackendError, "bad CBC solution line: " + line);
    if (entry++ < row_count) continue;
    auto n = as_number(value);
    if (!n) throw Error(ErrorKind::BackendError, "bad CBC value: " + line);
    columns.emplace_back(name, *n);
  }

  if (!binary.empty()) {
    int rows = 0, cols = 0;
    if (binary.size() < 2 * sizeof(int) + sizeof(double))
      throw Error(ErrorKind::BackendError, "truncated CBC binary solution");
    std::memcpy(&rows, binary.data(), sizeof(int));
    std::memcpy(&cols, binary.data() + sizeof(int), sizeof(int));
    const std::size_t need =
        2 * sizeof(int) + sizeof(double) * (1 + 2 * static_cast<std::size_t>(rows) + 2 * static_cast<std::size_t>(cols));
    if (rows < 0 || cols < 0 || binary.size() < need || static_cast<std::size_t>(cols) != columns.size())
      throw Error(ErrorKind::BackendError, "CBC binary solution does not match the text solution");
    double obj = 0.0;
    std::memcpy(&obj, binary.data() + 2 * sizeof(int), sizeof(double));
    out.objective = obj;
    const char* primal = binary.data() + 2 * sizeof(int) + sizeof(double) * (1 + 2 * static_cast<std::size_t>(rows));
    for (std::size_t j = 0; j < columns.size(); ++j) std::memcpy(&columns[j].second, primal + j * sizeof(double), sizeof(double));
  }
  for (auto& [name, value] : columns) out.values[name] = value;
  return out;
}

std::vector<double> to_primal(const MilpInstance& inst, const NamedSolution& named) {
  std::vector<double> x(inst.column_count(), 0.0);
  for (std::size_t j = 0; j < inst.column_count(); ++j) {
    auto it = named.values.find(inst.variables[j].name);
    if (it == named.values.end())
      throw Error(ErrorKind::BackendError, "solution lacks column " + inst.variables[j].name);
    x[j] = it->second;
  }
  return x;
}

}  // namespace ucsbi
