#include "glamap/io/toml.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace glamap::io {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

// Strips a trailing comment, respecting double-quoted strings.
std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

bool looks_like_int(const std::string& v) {
    if (v.empty()) return false;
    size_t i = (v[0] == '-' || v[0] == '+') ? 1 : 0;
    if (i == v.size()) return false;
    for (; i < v.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(v[i]))) return false;
    return true;
}

}  // namespace

Toml Toml::parse(const std::string& text) {
    Toml t;
    std::istringstream in(text);
    std::string line, prefix;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(strip_comment(line));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::runtime_error("toml: malformed table header at line " +
                                         std::to_string(lineno));
            prefix = trim(line.substr(1, line.size() - 2));
            if (prefix.empty())
                throw std::runtime_error("toml: empty table name at line " +
                                         std::to_string(lineno));
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("toml: expected key = value at line " +
                                     std::to_string(lineno));
        std::string key = trim(line.substr(0, eq));
        std::string raw = trim(line.substr(eq + 1));
        if (key.empty() || raw.empty())
            throw std::runtime_error("toml: empty key or value at line " +
                                     std::to_string(lineno));
        std::string full = prefix.empty() ? key : prefix + "." + key;

        Value v;
        if (raw.front() == '"') {
            if (raw.size() < 2 || raw.back() != '"')
                throw std::runtime_error("toml: unterminated string at line " +
                                         std::to_string(lineno));
            v.kind = Value::Kind::String;
            v.s = raw.substr(1, raw.size() - 2);
        } else if (raw.front() == '[') {
            if (raw.back() != ']')
                throw std::runtime_error("toml: unterminated array at line " +
                                         std::to_string(lineno));
            std::string body = raw.substr(1, raw.size() - 2);
            std::vector<std::string> items;
            std::string cur;
            bool in_str = false;
            for (char ch : body) {
                if (ch == '"') in_str = !in_str;
                if (ch == ',' && !in_str) {
                    items.push_back(trim(cur));
                    cur.clear();
                } else
                    cur += ch;
            }
            if (!trim(cur).empty()) items.push_back(trim(cur));
            bool string_array = !items.empty() && !items[0].empty() && items[0][0] == '"';
            if (string_array) {
                v.kind = Value::Kind::ArrayString;
                for (auto& it : items) {
                    if (it.size() < 2 || it.front() != '"' || it.back() != '"')
                        throw std::runtime_error("toml: bad string array at line " +
                                                 std::to_string(lineno));
                    v.as.push_back(it.substr(1, it.size() - 2));
                }
            } else {
                v.kind = Value::Kind::ArrayFloat;
                for (auto& it : items) v.af.push_back(std::stod(it));
            }
        } else if (raw == "true" || raw == "false") {
            v.kind = Value::Kind::Bool;
            v.b = raw == "true";
        } else if (looks_like_int(raw)) {
            v.kind = Value::Kind::Int;
            v.i = std::stoll(raw);
        } else {
            v.kind = Value::Kind::Float;
            try {
                v.f = std::stod(raw);
            } catch (const std::exception&) {
                throw std::runtime_error("toml: cannot parse value '" + raw + "' at line " +
                                         std::to_string(lineno));
            }
        }
        t.values_[full] = std::move(v);
    }
    return t;
}

Toml Toml::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("toml: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

bool Toml::has(const std::string& key) const { return values_.count(key) != 0; }

std::vector<std::string> Toml::keys() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (auto& [k, _] : values_) out.push_back(k);
    return out;
}

std::vector<std::string> Toml::keys_under(const std::string& prefix) const {
    std::vector<std::string> out;
    const std::string p = prefix + ".";
    for (auto& [k, _] : values_)
        if (k.rfind(p, 0) == 0) out.push_back(k.substr(p.size()));
    return out;
}

const Toml::Value& Toml::at(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("toml: missing key '" + key + "'");
    return it->second;
}

std::string Toml::get_string(const std::string& key) const {
    const Value& v = at(key);
    if (v.kind != Value::Kind::String)
        throw std::runtime_error("toml: key '" + key + "' is not a string");
    return v.s;
}

int64_t Toml::get_int(const std::string& key) const {
    const Value& v = at(key);
    if (v.kind == Value::Kind::Int) return v.i;
    throw std::runtime_error("toml: key '" + key + "' is not an integer");
}

double Toml::get_double(const std::string& key) const {
    const Value& v = at(key);
    if (v.kind == Value::Kind::Float) return v.f;
    if (v.kind == Value::Kind::Int) return static_cast<double>(v.i);
    throw std::runtime_error("toml: key '" + key + "' is not a number");
}

bool Toml::get_bool(const std::string& key) const {
    const Value& v = at(key);
    if (v.kind != Value::Kind::Bool)
        throw std::runtime_error("toml: key '" + key + "' is not a bool");
    return v.b;
}

std::vector<double> Toml::get_double_array(const std::string& key) const {
    const Value& v = at(key);
    if (v.kind != Value::Kind::ArrayFloat)
        throw std::runtime_error("toml: key '" + key + "' is not a numeric array");
    return v.af;
}

std::vector<std::string> Toml::get_string_array(const std::string& key) const {
    const Value& v = at(key);
    if (v.kind == Value::Kind::ArrayString) return v.as;
    throw std::runtime_error("toml: key '" + key + "' is not a string array");
}

std::string Toml::get_string_or(const std::string& key, const std::string& dflt) const {
    return has(key) ? get_string(key) : dflt;
}
int64_t Toml::get_int_or(const std::string& key, int64_t dflt) const {
    return has(key) ? get_int(key) : dflt;
}
double Toml::get_double_or(const std::string& key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
}
bool Toml::get_bool_or(const std::string& key, bool dflt) const {
    return has(key) ? get_bool(key) : dflt;
}

void Toml::set_string(const std::string& key, const std::string& v) {
    Value x;
    x.kind = Value::Kind::String;
    x.s = v;
    values_[key] = x;
}
void Toml::set_int(const std::string& key, int64_t v) {
    Value x;
    x.kind = Value::Kind::Int;
    x.i = v;
    values_[key] = x;
}
void Toml::set_double(const std::string& key, double v) {
    Value x;
    x.kind = Value::Kind::Float;
    x.f = v;
    values_[key] = x;
}
void Toml::set_bool(const std::string& key, bool v) {
    Value x;
    x.kind = Value::Kind::Bool;
    x.b = v;
    values_[key] = x;
}
void Toml::set_double_array(const std::string& key, const std::vector<double>& v) {
    Value x;
    x.kind = Value::Kind::ArrayFloat;
    x.af = v;
    values_[key] = x;
}
void Toml::set_string_array(const std::string& key, const std::vector<std::string>& v) {
    Value x;
    x.kind = Value::Kind::ArrayString;
    x.as = v;
    values_[key] = x;
}

std::string Toml::serialize() const {
    // Group keys by table prefix; bare keys first.
    std::ostringstream out;
    out.precision(17);
    auto emit = [&out](const std::string& key, const Value& v) {
        out << key << " = ";
        switch (v.kind) {
            case Value::Kind::String: out << '"' << v.s << '"'; break;
            case Value::Kind::Int: out << v.i; break;
            case Value::Kind::Float: {
                if (v.f == static_cast<int64_t>(v.f) && std::abs(v.f) < 1e15)
                    out << v.f << ".0";
                else
                    out << v.f;
                break;
            }
            case Value::Kind::Bool: out << (v.b ? "true" : "false"); break;
            case Value::Kind::ArrayFloat: {
                out << "[";
                for (size_t i = 0; i < v.af.size(); ++i) out << (i ? ", " : "") << v.af[i];
                out << "]";
                break;
            }
            case Value::Kind::ArrayString: {
                out << "[";
                for (size_t i = 0; i < v.as.size(); ++i)
                    out << (i ? ", " : "") << '"' << v.as[i] << '"';
                out << "]";
                break;
            }
        }
        out << "\n";
    };

    for (auto& [k, v] : values_)
        if (k.find('.') == std::string::npos) emit(k, v);
    std::string current;
    for (auto& [k, v] : values_) {
        size_t dot = k.rfind('.');
        if (dot == std::string::npos) continue;
        std::string table = k.substr(0, dot);
        if (table != current) {
            out << "\n[" << table << "]\n";
            current = table;
        }
        emit(k.substr(dot + 1), v);
    }
    return out.str();
}

void Toml::write_file(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("toml: cannot write " + path);
    f << serialize();
}

}  // namespace glamap::io
