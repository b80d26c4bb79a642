#include "kinswarm/config.hpp"

#include "kinswarm/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

namespace kinswarm {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& path, const std::string& why)
{
    throw Error(ErrorKind::ConfigInvalid, path.empty() ? why : path + ": " + why);
}

class TomlParser
{
public:
    explicit TomlParser(std::string_view text) : s_(text) {}

    json parse()
    {
        json root = json::object();
        std::vector<std::string> table; // current table path
        std::set<std::string> defined;
        while (true) {
            skip_blank_lines();
            if (eof())
                break;
            if (peek() == '[') {
                bool array = s_.substr(pos_, 2) == "[[";
                pos_ += array ? 2 : 1;
                skip_ws();
                std::vector<std::string> path = parse_key_path();
                skip_ws();
                if (array ? s_.substr(pos_, 2) != "]]" : peek() != ']')
                    fail(array ? "expected ']]'" : "expected ']'");
                pos_ += array ? 2 : 1;
                end_of_line();
                json* node = &root;
                for (std::size_t k = 0; k + 1 < path.size(); ++k)
                    node = &descend(*node, path[k]);
                const std::string& last = path.back();
                if (array) {
                    if (!node->contains(last))
                        (*node)[last] = json::array();
                    json& arr = (*node)[last];
                    if (!arr.is_array())
                        fail("'" + last + "' is not an array of tables");
                    arr.push_back(json::object());
                } else {
                    std::string joined = join(path);
                    if (!defined.insert(joined).second)
                        fail("table [" + joined + "] defined twice");
                    if (node->contains(last) && !(*node)[last].is_object())
                        fail("'" + last + "' is already a value");
                    if (!node->contains(last))
                        (*node)[last] = json::object();
                }
                table = path;
                continue;
            }
            std::vector<std::string> key = parse_key_path();
            skip_ws();
            if (peek() != '=')
                fail("expected '=' after key");
            ++pos_;
            skip_ws();
            json value = parse_value();
            end_of_line();
            json* node = &root;
            for (const auto& t : table)
                node = &descend(*node, t);
            for (std::size_t k = 0; k + 1 < key.size(); ++k)
                node = &descend(*node, key[k]);
            if (node->contains(key.back()))
                fail("duplicate key '" + key.back() + "'");
            (*node)[key.back()] = std::move(value);
        }
        return root;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;
    int line_ = 1;

    bool eof() const { return pos_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[pos_]; }

    [[noreturn]] void fail(const std::string& why) const
    {
        throw Error(ErrorKind::ConfigInvalid, fmt::format("line {}: {}", line_, why));
    }

    static std::string join(const std::vector<std::string>& path)
    {
        std::string out;
        for (const auto& p : path)
            out += (out.empty() ? "" : ".") + p;
        return out;
    }

    json& descend(json& node, const std::string& key)
    {
        if (!node.contains(key))
            node[key] = json::object();
        json* child = &node[key];
        if (child->is_array()) {
            if (child->empty() || !child->back().is_object())
                fail("'" + key + "' is not a table");
            child = &child->back();
        }
        if (!child->is_object())
            fail("'" + key + "' is not a table");
        return *child;
    }

    void skip_ws()
    {
        while (!eof() && (peek() == ' ' || peek() == '\t'))
            ++pos_;
    }

    void skip_comment()
    {
        if (peek() == '#')
            while (!eof() && peek() != '\n')
                ++pos_;
    }

    void newline()
    {
        if (peek() == '\r')
            ++pos_;
        if (peek() == '\n') {
            ++pos_;
            ++line_;
        }
    }

    void skip_blank_lines()
    {
        while (!eof()) {
            skip_ws();
            skip_comment();
            if (peek() == '\n' || peek() == '\r')
                newline();
            else
                break;
        }
    }

    // Whitespace, comments and newlines inside arrays and inline tables.
    void skip_space_all()
    {
        while (!eof()) {
            skip_ws();
            skip_comment();
            if (peek() == '\n' || peek() == '\r')
                newline();
            else
                break;
        }
    }

    void end_of_line()
    {
        skip_ws();
        skip_comment();
        if (eof())
            return;
        if (peek() != '\n' && peek() != '\r')
            fail(fmt::format("unexpected '{}' after value", peek()));
        newline();
    }

    std::string parse_key()
    {
        if (peek() == '"')
            return parse_basic_string();
        if (peek() == '\'')
            return parse_literal_string();
        std::size_t start = pos_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
            ++pos_;
        if (start == pos_)
            fail("expected a key");
        return std::string(s_.substr(start, pos_ - start));
    }

    std::vector<std::string> parse_key_path()
    {
        std::vector<std::string> path{parse_key()};
        while (true) {
            skip_ws();
            if (peek() != '.')
                break;
            ++pos_;
            skip_ws();
            path.push_back(parse_key());
        }
        return path;
    }

    std::string parse_basic_string()
    {
        ++pos_; // opening quote
        std::string out;
        while (true) {
            if (eof() || peek() == '\n')
                fail("unterminated string");
            char c = s_[pos_++];
            if (c == '"')
                break;
            if (c != '\\') {
                out.push_back(c);
                continue;
            }
            if (eof())
                fail("unterminated escape");
            char e = s_[pos_++];
            switch (e) {
            case '"': out.push_back('"'); break;
            case '\\': out.push_back('\\'); break;
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case 'r': out.push_back('\r'); break;
            case 'b': out.push_back('\b'); break;
            case 'f': out.push_back('\f'); break;
            case 'u': {
                if (pos_ + 4 > s_.size())
                    fail("short \\u escape");
                unsigned code = std::stoul(std::string(s_.substr(pos_, 4)), nullptr, 16);
                pos_ += 4;
                if (code < 0x80) {
                    out.push_back(static_cast<char>(code));
                } else if (code < 0x800) {
                    out.push_back(static_cast<char>(0xC0 | (code >> 6)));
                    out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
                } else {
                    out.push_back(static_cast<char>(0xE0 | (code >> 12)));
                    out.push_back(static_cast<char>(0x80 | ((code >> 6) & 0x3F)));
                    out.push_back(static_cast<char>(0x80 | (code & 0x3F)));
                }
                break;
            }
            default: fail(fmt::format("unknown escape '\\{}'", e));
            }
        }
        return out;
    }

    std::string parse_literal_string()
    {
        ++pos_;
        std::size_t start = pos_;
        while (!eof() && peek() != '\'' && peek() != '\n')
            ++pos_;
        if (peek() != '\'')
            fail("unterminated literal string");
        std::string out(s_.substr(start, pos_ - start));
        ++pos_;
        return out;
    }

    json parse_value()
    {
        char c = peek();
        if (c == '"')
            return parse_basic_string();
        if (c == '\'')
            return parse_literal_string();
        if (c == '[')
            return parse_array();
        if (c == '{')
            return parse_inline_table();
        std::size_t start = pos_;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '+' ||
                          peek() == '-' || peek() == '.'))
            ++pos_;
        std::string tok(s_.substr(start, pos_ - start));
        if (tok.empty())
            fail("expected a value");
        if (tok == "true")
            return true;
        if (tok == "false")
            return false;
        return parse_number(tok);
    }

    json parse_number(std::string tok)
    {
        tok.erase(std::remove(tok.begin(), tok.end(), '_'), tok.end());
        std::string body = tok;
        if (!body.empty() && (body[0] == '+' || body[0] == '-'))
            body = body.substr(1);
        if (body == "inf" || body == "nan") {
            double v = body == "inf" ? std::numeric_limits<double>::infinity()
                                     : std::numeric_limits<double>::quiet_NaN();
            return tok[0] == '-' ? -v : v;
        }
        if (body.empty() || !std::isdigit(static_cast<unsigned char>(body[0])))
            fail("invalid value '" + tok + "'");
        bool is_float = tok.find_first_of(".eE") != std::string::npos;
        std::size_t used = 0;
        try {
            if (is_float) {
                double v = std::stod(tok, &used);
                if (used == tok.size())
                    return v;
            } else {
                long long v = std::stoll(tok, &used);
                if (used == tok.size())
                    return v;
            }
        } catch (const std::exception&) {
        }
        fail("invalid number '" + tok + "'");
    }

    json parse_array()
    {
        ++pos_;
        json arr = json::array();
        while (true) {
            skip_space_all();
            if (eof())
                fail("unterminated array");
            if (peek() == ']') {
                ++pos_;
                return arr;
            }
            arr.push_back(parse_value());
            skip_space_all();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            if (peek() != ']')
                fail("expected ',' or ']' in array");
        }
    }

    json parse_inline_table()
    {
        ++pos_;
        json obj = json::object();
        skip_space_all();
        if (peek() == '}') {
            ++pos_;
            return obj;
        }
        while (true) {
            skip_space_all();
            std::vector<std::string> key = parse_key_path();
            skip_ws();
            if (peek() != '=')
                fail("expected '=' in inline table");
            ++pos_;
            skip_ws();
            json value = parse_value();
            json* node = &obj;
            for (std::size_t k = 0; k + 1 < key.size(); ++k)
                node = &descend(*node, key[k]);
            if (node->contains(key.back()))
                fail("duplicate key '" + key.back() + "'");
            (*node)[key.back()] = std::move(value);
            skip_space_all();
            if (peek() == ',') {
                ++pos_;
                continue;
            }
            if (peek() == '}') {
                ++pos_;
                return obj;
            }
            fail("expected ',' or '}' in inline table");
        }
    }
};

// Path-aware accessors.

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed)
{
    if (!obj.is_object())
        invalid(path, "expected a table");
    for (const auto& [key, _] : obj.items()) {
        bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
        if (!ok)
            invalid(path.empty() ? key : path + "." + key, "unknown field");
    }
}

std::string sub(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double get_number(const json& obj, const std::string& path, const char* key, std::optional<double> fallback = {})
{
    if (!obj.contains(key)) {
        if (fallback)
            return *fallback;
        invalid(sub(path, key), "missing required field");
    }
    const json& v = obj.at(key);
    if (!v.is_number())
        invalid(sub(path, key), "expected a number");
    return v.get<double>();
}

long long get_integer(const json& obj, const std::string& path, const char* key, std::optional<long long> fallback = {})
{
    if (!obj.contains(key)) {
        if (fallback)
            return *fallback;
        invalid(sub(path, key), "missing required field");
    }
    const json& v = obj.at(key);
    if (!v.is_number_integer())
        invalid(sub(path, key), "expected an integer");
    return v.get<long long>();
}

std::string get_string(const json& obj, const std::string& path, const char* key,
                       std::optional<std::string> fallback = {})
{
    if (!obj.contains(key)) {
        if (fallback)
            return *fallback;
        invalid(sub(path, key), "missing required field");
    }
    const json& v = obj.at(key);
    if (!v.is_string())
        invalid(sub(path, key), "expected a string");
    return v.get<std::string>();
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback)
{
    if (!obj.contains(key))
        return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean())
        invalid(sub(path, key), "expected true or false");
    return v.get<bool>();
}

// A number broadcasts to all d coordinates; an array must have length d.
std::vector<double> get_vector(const json& obj, const std::string& path, const char* key, std::size_t dim,
                               std::optional<double> fallback = {})
{
    if (!obj.contains(key)) {
        if (fallback)
            return std::vector<double>(dim, *fallback);
        invalid(sub(path, key), "missing required field");
    }
    const json& v = obj.at(key);
    if (v.is_number())
        return std::vector<double>(dim, v.get<double>());
    if (!v.is_array() || v.size() != dim)
        invalid(sub(path, key), fmt::format("expected a number or an array of {} numbers", dim));
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number())
            invalid(sub(path, key), "expected numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

std::vector<double> get_flat_numbers(const json& obj, const std::string& path, const char* key)
{
    if (!obj.contains(key))
        invalid(sub(path, key), "missing required field");
    std::vector<double> out;
    std::function<void(const json&)> walk = [&](const json& v) {
        if (v.is_number())
            out.push_back(v.get<double>());
        else if (v.is_array())
            for (const auto& x : v)
                walk(x);
        else
            invalid(sub(path, key), "expected numbers");
    };
    walk(obj.at(key));
    return out;
}

const json& get_table(const json& doc, const char* key)
{
    static const json empty = json::object();
    if (!doc.contains(key))
        return empty;
    if (!doc.at(key).is_object())
        invalid(key, "expected a table");
    return doc.at(key);
}

SamplerSpec parse_sampler(const json& j, const std::string& path, std::size_t dim, std::size_t count)
{
    if (!j.is_object())
        invalid(path, "expected an inline table with a 'type' field");
    SamplerSpec s;
    std::string type = get_string(j, path, "type");
    std::string mode = get_string(j, path, "mode", dim == 1 ? "quantile" : "random");
    if (mode != "quantile" && mode != "random")
        invalid(sub(path, "mode"), "expected 'quantile' or 'random'");
    s.quantile = mode == "quantile";
    if (type == "uniform_interval" || type == "uniform_box") {
        check_keys(j, path, {"type", "mode", "lower", "upper"});
        s.kind = SamplerKind::UniformBox;
        s.lower = get_vector(j, path, "lower", dim);
        s.upper = get_vector(j, path, "upper", dim);
        for (std::size_t c = 0; c < dim; ++c)
            if (!(s.lower[c] < s.upper[c]))
                invalid(path, "lower must be below upper");
    } else if (type == "uniform_ball") {
        check_keys(j, path, {"type", "mode", "center", "radius"});
        s.kind = SamplerKind::UniformBall;
        s.center = get_vector(j, path, "center", dim, 0.0);
        s.radius = get_number(j, path, "radius");
        if (!(s.radius > 0.0))
            invalid(sub(path, "radius"), "must be positive");
        if (s.quantile && dim != 1)
            invalid(sub(path, "mode"), "quantile sampling of a ball needs d = 1");
    } else if (type == "gaussian") {
        check_keys(j, path, {"type", "mode", "mean", "std"});
        s.kind = SamplerKind::Gaussian;
        s.center = get_vector(j, path, "mean", dim, 0.0);
        s.std_dev = get_number(j, path, "std");
        if (!(s.std_dev > 0.0))
            invalid(sub(path, "std"), "must be positive");
    } else if (type == "two_bump") {
        check_keys(j, path, {"type", "mode", "mean_a", "mean_b", "std", "fraction"});
        s.kind = SamplerKind::TwoBump;
        s.center = get_vector(j, path, "mean_a", dim);
        s.center_b = get_vector(j, path, "mean_b", dim);
        s.std_dev = get_number(j, path, "std");
        s.fraction = get_number(j, path, "fraction", 0.5);
        if (!(s.std_dev > 0.0))
            invalid(sub(path, "std"), "must be positive");
        if (!(s.fraction > 0.0 && s.fraction < 1.0))
            invalid(sub(path, "fraction"), "must lie in (0, 1)");
    } else if (type == "explicit") {
        check_keys(j, path, {"type", "mode", "positions"});
        s.kind = SamplerKind::Explicit;
        s.values = get_flat_numbers(j, path, "positions");
        if (s.values.size() != count * dim)
            invalid(sub(path, "positions"), fmt::format("expected {} numbers, got {}", count * dim, s.values.size()));
    } else {
        invalid(sub(path, "type"), "unknown sampler '" + type + "'");
    }
    if (s.quantile && dim != 1)
        invalid(sub(path, "mode"), "quantile sampling needs d = 1");
    return s;
}

VelocitySpec parse_velocity(const json& j, const std::string& path, std::size_t dim, std::size_t count)
{
    VelocitySpec v;
    std::string type;
    if (j.is_string()) {
        type = j.get<std::string>();
    } else if (j.is_object()) {
        type = get_string(j, path, "type");
    } else {
        invalid(path, "expected a string or an inline table");
    }
    if (type == "zero") {
        v.kind = VelocityKind::Zero;
    } else if (type == "constant") {
        check_keys(j, path, {"type", "value"});
        v.kind = VelocityKind::Constant;
        v.values = get_vector(j, path, "value", dim);
    } else if (type == "explicit") {
        check_keys(j, path, {"type", "values"});
        v.kind = VelocityKind::Explicit;
        v.values = get_flat_numbers(j, path, "values");
        if (v.values.size() != count * dim)
            invalid(sub(path, "values"), fmt::format("expected {} numbers, got {}", count * dim, v.values.size()));
    } else if (type == "particle_field") {
        v.kind = VelocityKind::ParticleField;
    } else if (type == "grid_field") {
        v.kind = VelocityKind::GridField;
    } else if (type == "well_prepared") {
        v.kind = VelocityKind::WellPrepared;
    } else {
        invalid(j.is_string() ? path : sub(path, "type"), "unknown velocity initialization '" + type + "'");
    }
    if (j.is_object() && (v.kind == VelocityKind::Zero || v.kind == VelocityKind::ParticleField ||
                          v.kind == VelocityKind::GridField || v.kind == VelocityKind::WellPrepared))
        check_keys(j, path, {"type"});
    return v;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> kernel_targets(const json& entry,
                                                                             const std::string& path, std::size_t n)
{
    std::vector<std::size_t> rows, cols;
    if (entry.contains("pair")) {
        const json& p = entry.at("pair");
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
            invalid(sub(path, "pair"), "expected [i, j]");
        long long i = p[0].get<long long>(), j = p[1].get<long long>();
        if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= n || static_cast<std::size_t>(j) >= n)
            invalid(sub(path, "pair"), fmt::format("indices must lie in [0, {})", n));
        rows.push_back(static_cast<std::size_t>(i));
        cols.push_back(static_cast<std::size_t>(j));
        if (entry.contains("apply"))
            invalid(path, "give either 'pair' or 'apply', not both");
        return {rows, cols};
    }
    std::string apply = get_string(entry, path, "apply", "all");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            bool take = apply == "all" || (apply == "diagonal" && i == j) || (apply == "off_diagonal" && i != j);
            if (apply != "all" && apply != "diagonal" && apply != "off_diagonal")
                invalid(sub(path, "apply"), "expected 'all', 'diagonal' or 'off_diagonal'");
            if (take) {
                rows.push_back(i);
                cols.push_back(j);
            }
        }
    return {rows, cols};
}

} // namespace

json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

json load_config_document(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::IoFailure, "cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        try {
            return json::parse(text);
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::ConfigInvalid, std::string("JSON: ") + e.what());
        }
    }
    return parse_toml(text);
}

std::string_view to_string(Dynamics dynamics) noexcept
{
    switch (dynamics) {
    case Dynamics::FirstOrder: return "first_order";
    case Dynamics::SecondOrder: return "second_order";
    case Dynamics::KineticPicard: return "kinetic_picard";
    }
    return "unknown";
}

std::string_view to_string(ReferenceKind kind) noexcept
{
    switch (kind) {
    case ReferenceKind::Analytic: return "analytic";
    case ReferenceKind::MacroParticle: return "macro_particle";
    case ReferenceKind::Grid1D: return "grid_1d";
    }
    return "unknown";
}

KernelSpec parse_kernel(const json& j, const std::string& path)
{
    if (!j.is_object())
        invalid(path, "expected an inline table with a 'type' field");
    std::string type = get_string(j, path, "type");
    if (type == "zero") {
        check_keys(j, path, {"type"});
        return ZeroKernel{};
    }
    if (type == "quadratic") {
        check_keys(j, path, {"type", "a"});
        return QuadraticKernel{get_number(j, path, "a", 1.0)};
    }
    if (type == "morse" || type == "gaussian") {
        check_keys(j, path, {"type", "C_a", "l_a", "C_r", "l_r"});
        double ca = get_number(j, path, "C_a", 0.0), la = get_number(j, path, "l_a", 1.0);
        double cr = get_number(j, path, "C_r", 0.0), lr = get_number(j, path, "l_r", 1.0);
        if (!(la > 0.0))
            invalid(sub(path, "l_a"), "must be positive");
        if (!(lr > 0.0))
            invalid(sub(path, "l_r"), "must be positive");
        if (type == "morse")
            return MorseKernel{ca, la, cr, lr};
        return GaussianKernel{ca, la, cr, lr};
    }
    if (type == "riesz") {
        check_keys(j, path, {"type", "C", "alpha"});
        double c = get_number(j, path, "C"), a = get_number(j, path, "alpha");
        if (!(c > 0.0))
            invalid(sub(path, "C"), "must be positive");
        return RieszKernel{c, a};
    }
    if (type == "regularized_riesz") {
        check_keys(j, path, {"type", "C", "alpha", "delta"});
        double c = get_number(j, path, "C"), a = get_number(j, path, "alpha"), d = get_number(j, path, "delta");
        if (!(c > 0.0))
            invalid(sub(path, "C"), "must be positive");
        if (!(d > 0.0))
            invalid(sub(path, "delta"), "must be positive");
        return RegularizedRieszKernel{c, a, d};
    }
    invalid(sub(path, "type"), "unknown kernel type '" + type + "'");
}

json kernel_to_json(const KernelSpec& spec)
{
    return std::visit(
        [](const auto& k) -> json {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, ZeroKernel>)
                return {{"type", "zero"}};
            else if constexpr (std::is_same_v<K, QuadraticKernel>)
                return {{"type", "quadratic"}, {"a", k.a}};
            else if constexpr (std::is_same_v<K, MorseKernel>)
                return {{"type", "morse"}, {"C_a", k.c_att}, {"l_a", k.l_att}, {"C_r", k.c_rep}, {"l_r", k.l_rep}};
            else if constexpr (std::is_same_v<K, GaussianKernel>)
                return {{"type", "gaussian"}, {"C_a", k.c_att}, {"l_a", k.l_att}, {"C_r", k.c_rep}, {"l_r", k.l_rep}};
            else if constexpr (std::is_same_v<K, RieszKernel>)
                return {{"type", "riesz"}, {"C", k.c}, {"alpha", k.alpha}};
            else
                return {{"type", "regularized_riesz"}, {"C", k.c}, {"alpha", k.alpha}, {"delta", k.delta}};
        },
        spec);
}

KernelMatrix ExperimentConfig::kernel_matrix() const { return KernelMatrix(dim, species.size(), kernels); }

KernelMatrix ExperimentConfig::particle_kernels() const
{
    KernelMatrix m = kernel_matrix();
    return delta > 0.0 ? m.regularized(delta) : m;
}

ExperimentConfig parse_experiment(const json& doc)
{
    if (!doc.is_object())
        invalid("", "config root must be a table");
    check_keys(doc, "", {"name", "dim", "seed", "horizon", "output_dir", "dynamics", "picard", "diagnostics", "grid",
                         "species", "kernel", "sweep"});
    ExperimentConfig cfg;
    cfg.document = doc;
    cfg.name = get_string(doc, "", "name", "run");
    long long dim = get_integer(doc, "", "dim", 1);
    if (dim < 1)
        invalid("dim", "must be at least 1");
    cfg.dim = static_cast<std::size_t>(dim);
    long long seed = get_integer(doc, "", "seed", 0);
    if (seed < 0)
        invalid("seed", "must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(seed);
    cfg.horizon = get_number(doc, "", "horizon", 1.0);
    if (!(cfg.horizon >= 0.0) || !std::isfinite(cfg.horizon))
        invalid("horizon", "must be nonnegative and finite");
    cfg.output_dir = get_string(doc, "", "output_dir", "out/" + cfg.name);

    // Dynamics.
    const json& dyn = get_table(doc, "dynamics");
    check_keys(dyn, "dynamics",
               {"kind", "epsilon", "delta", "scheme", "dt", "reference_dt", "reference_scheme", "field"});
    std::string kind = get_string(dyn, "dynamics", "kind", "second_order");
    if (kind == "first_order")
        cfg.dynamics = Dynamics::FirstOrder;
    else if (kind == "second_order")
        cfg.dynamics = Dynamics::SecondOrder;
    else if (kind == "kinetic_picard")
        cfg.dynamics = Dynamics::KineticPicard;
    else
        invalid("dynamics.kind", "unknown dynamics '" + kind + "'");
    cfg.integrator.epsilon = get_number(dyn, "dynamics", "epsilon", 1.0);
    if (!(cfg.integrator.epsilon > 0.0))
        invalid("dynamics.epsilon", "must be positive");
    cfg.delta = get_number(dyn, "dynamics", "delta", 0.0);
    if (!(cfg.delta >= 0.0))
        invalid("dynamics.delta", "must be nonnegative");
    const bool first = cfg.dynamics == Dynamics::FirstOrder;
    std::string scheme = get_string(dyn, "dynamics", "scheme", first ? "rk4" : "exp-euler");
    try {
        cfg.integrator.scheme = parse_scheme(scheme);
    } catch (const Error&) {
        invalid("dynamics.scheme", "unknown scheme '" + scheme + "'");
    }
    if (first && (cfg.integrator.scheme == Scheme::ExpEuler || cfg.integrator.scheme == Scheme::Strang))
        invalid("dynamics.scheme", "exp-euler and strang apply to second-order dynamics only");
    if (cfg.dynamics == Dynamics::KineticPicard && cfg.integrator.scheme != Scheme::ExpEuler)
        invalid("dynamics.scheme", "the Picard solver integrates characteristics with exp-euler");
    cfg.integrator.dt = get_number(dyn, "dynamics", "dt", 1e-3);
    if (!(cfg.integrator.dt > 0.0))
        invalid("dynamics.dt", "must be positive");
    cfg.reference_dt = get_number(dyn, "dynamics", "reference_dt", 0.0);
    if (!(cfg.reference_dt >= 0.0))
        invalid("dynamics.reference_dt", "must be nonnegative");
    std::string ref_scheme = get_string(dyn, "dynamics", "reference_scheme", "rk4");
    if (ref_scheme == "rk4")
        cfg.reference_scheme = Scheme::Rk4;
    else if (ref_scheme == "euler")
        cfg.reference_scheme = Scheme::Euler;
    else
        invalid("dynamics.reference_scheme", "expected 'rk4' or 'euler'");

    // The grid field is validated once the [grid] table has been read.
    const std::string field = get_string(dyn, "dynamics", "field", "direct");
    if (field == "direct")
        cfg.field = FieldModel::Direct;
    else if (field == "grid")
        cfg.field = FieldModel::Grid;
    else
        invalid("dynamics.field", "expected 'direct' or 'grid'");

    // Picard.
    const json& pic = get_table(doc, "picard");
    check_keys(pic, "picard", {"tol", "max_iter", "window", "samples"});
    cfg.picard_tol = get_number(pic, "picard", "tol", 1e-8);
    if (!(cfg.picard_tol > 0.0))
        invalid("picard.tol", "must be positive");
    long long max_iter = get_integer(pic, "picard", "max_iter", 50);
    if (max_iter < 1)
        invalid("picard.max_iter", "must be at least 1");
    cfg.picard_max_iter = static_cast<std::size_t>(max_iter);
    cfg.picard_window = get_number(pic, "picard", "window", 0.0);
    if (!(cfg.picard_window >= 0.0))
        invalid("picard.window", "must be nonnegative");
    long long psamples = get_integer(pic, "picard", "samples", 32);
    if (psamples < 1)
        invalid("picard.samples", "must be at least 1");
    cfg.picard_samples = static_cast<std::size_t>(psamples);

    // Grid.
    if (doc.contains("grid")) {
        const json& g = get_table(doc, "grid");
        check_keys(g, "grid", {"x_min", "x_max", "cells", "dt"});
        GridSpec grid;
        grid.x_min = get_number(g, "grid", "x_min", -2.0);
        grid.x_max = get_number(g, "grid", "x_max", 2.0);
        long long cells = get_integer(g, "grid", "cells", 512);
        if (cells < 2)
            invalid("grid.cells", "must be at least 2");
        grid.cells = static_cast<std::size_t>(cells);
        grid.dt = get_number(g, "grid", "dt", 0.0);
        if (!(grid.x_min < grid.x_max))
            invalid("grid", "x_min must be below x_max");
        if (!(grid.dt >= 0.0))
            invalid("grid.dt", "must be nonnegative");
        if (cfg.dim != 1)
            invalid("grid", "reference grids are one-dimensional");
        cfg.grid = grid;
    }

    if (cfg.field == FieldModel::Grid) {
        if (!cfg.grid)
            invalid("dynamics.field", "the grid field needs a [grid] table");
        if (cfg.dynamics == Dynamics::KineticPicard)
            invalid("dynamics.field", "the Picard solver uses direct summation");
    }

    // Diagnostics.
    const json& diag = get_table(doc, "diagnostics");
    check_keys(diag, "diagnostics",
               {"channels", "samples", "snapshot_every", "write_snapshots", "metric", "directions", "metric_seed"});
    if (diag.contains("channels")) {
        const json& ch = diag.at("channels");
        if (!ch.is_array())
            invalid("diagnostics.channels", "expected an array of strings");
        for (std::size_t k = 0; k < ch.size(); ++k) {
            std::string path = fmt::format("diagnostics.channels[{}]", k);
            if (!ch[k].is_string())
                invalid(path, "expected a string");
            std::string name = ch[k].get<std::string>();
            static const std::set<std::string> known{"alignment", "free_energy", "second_moment", "support_radius",
                                                     "linf_density"};
            if (!known.count(name))
                invalid(path, "unknown channel '" + name + "'");
            if (name == "linf_density" && !cfg.grid)
                invalid(path, "linf_density needs a [grid] table");
            if (name == "alignment" && first)
                invalid(path, "alignment needs second-order or kinetic dynamics");
            cfg.channels.push_back(name);
        }
    }
    long long samples = get_integer(diag, "diagnostics", "samples", 20);
    if (samples < 1)
        invalid("diagnostics.samples", "must be at least 1");
    cfg.samples = static_cast<std::size_t>(samples);
    long long every = get_integer(diag, "diagnostics", "snapshot_every", 1);
    if (every < 1)
        invalid("diagnostics.snapshot_every", "must be at least 1");
    cfg.snapshot_every = static_cast<std::size_t>(every);
    cfg.write_snapshots = get_bool(diag, "diagnostics", "write_snapshots", true);
    std::string metric = get_string(diag, "diagnostics", "metric", cfg.dim == 1 ? "1d" : "exact");
    try {
        cfg.metric.method = parse_w1_method(metric);
    } catch (const Error&) {
        invalid("diagnostics.metric", "unknown metric '" + metric + "'");
    }
    if (cfg.metric.method == W1Method::OneD && cfg.dim != 1)
        invalid("diagnostics.metric", "w1_1d needs d = 1");
    long long directions = get_integer(diag, "diagnostics", "directions", 64);
    if (directions < 1)
        invalid("diagnostics.directions", "must be at least 1");
    cfg.metric.directions = static_cast<std::size_t>(directions);
    long long mseed = get_integer(diag, "diagnostics", "metric_seed", 0);
    if (mseed < 0)
        invalid("diagnostics.metric_seed", "must be nonnegative");
    cfg.metric.seed = static_cast<std::uint64_t>(mseed);

    // Species.
    if (!doc.contains("species") || !doc.at("species").is_array() || doc.at("species").empty())
        invalid("species", "at least one [[species]] table is required");
    const json& species = doc.at("species");
    for (std::size_t i = 0; i < species.size(); ++i) {
        std::string path = fmt::format("species[{}]", i);
        const json& s = species[i];
        check_keys(s, path, {"count", "sampler", "velocity"});
        SpeciesSpec spec;
        long long count = get_integer(s, path, "count");
        if (count < 1)
            invalid(sub(path, "count"), "must be at least 1");
        spec.count = static_cast<std::size_t>(count);
        if (!s.contains("sampler"))
            invalid(sub(path, "sampler"), "missing required field");
        spec.sampler = parse_sampler(s.at("sampler"), sub(path, "sampler"), cfg.dim, spec.count);
        if (first) {
            spec.velocity.kind = VelocityKind::None;
        } else if (s.contains("velocity")) {
            spec.velocity = parse_velocity(s.at("velocity"), sub(path, "velocity"), cfg.dim, spec.count);
            if (spec.velocity.kind == VelocityKind::GridField && !cfg.grid)
                invalid(sub(path, "velocity"), "grid_field needs a [grid] table");
        }
        cfg.species.push_back(std::move(spec));
    }

    // Kernels: zero unless set; later entries override earlier ones.
    const std::size_t n = cfg.species.size();
    cfg.kernels.assign(n * n, ZeroKernel{});
    if (doc.contains("kernel")) {
        const json& ks = doc.at("kernel");
        if (!ks.is_array())
            invalid("kernel", "expected [[kernel]] tables");
        for (std::size_t e = 0; e < ks.size(); ++e) {
            std::string path = fmt::format("kernel[{}]", e);
            check_keys(ks[e], path, {"pair", "apply", "kernel"});
            if (!ks[e].contains("kernel"))
                invalid(sub(path, "kernel"), "missing required field");
            KernelSpec spec = parse_kernel(ks[e].at("kernel"), sub(path, "kernel"));
            auto [rows, cols] = kernel_targets(ks[e], path, n);
            for (std::size_t k = 0; k < rows.size(); ++k)
                cfg.kernels[rows[k] * n + cols[k]] = spec;
        }
    }
    try {
        cfg.kernel_matrix();
        if (cfg.delta > 0.0)
            cfg.particle_kernels();
    } catch (const Error& e) {
        invalid("kernel", e.what());
    }
    if (cfg.dynamics == Dynamics::KineticPicard && cfg.kernel_matrix().has_singular() && cfg.delta == 0.0)
        invalid("dynamics.delta", "Picard runs with singular kernels need delta > 0");
    return cfg;
}

SweepConfig parse_sweep(const json& doc)
{
    SweepConfig sw;
    sw.base = parse_experiment(doc);
    if (!doc.contains("sweep"))
        invalid("sweep", "missing [sweep] table");
    const json& s = get_table(doc, "sweep");
    check_keys(s, "sweep", {"parameter", "values", "reference", "modulated_energy", "fit_window", "synthetic"});
    std::string param = get_string(s, "sweep", "parameter", "epsilon");
    if (param == "epsilon")
        sw.parameter = SweepParameter::Epsilon;
    else if (param == "delta")
        sw.parameter = SweepParameter::Delta;
    else
        invalid("sweep.parameter", "expected 'epsilon' or 'delta'");
    if (!s.contains("values") || !s.at("values").is_array())
        invalid("sweep.values", "expected an array of numbers");
    for (std::size_t k = 0; k < s.at("values").size(); ++k) {
        const json& v = s.at("values")[k];
        if (!v.is_number() || !(v.get<double>() > 0.0))
            invalid(fmt::format("sweep.values[{}]", k), "expected a positive number");
        if (!sw.values.empty() && !(v.get<double>() < sw.values.back()))
            invalid(fmt::format("sweep.values[{}]", k), "values must be strictly decreasing");
        sw.values.push_back(v.get<double>());
    }
    if (sw.values.size() < 3)
        invalid("sweep.values", "at least 3 values are needed for rate fitting");
    std::string ref = get_string(s, "sweep", "reference", "macro_particle");
    if (ref == "analytic")
        sw.reference = ReferenceKind::Analytic;
    else if (ref == "macro_particle")
        sw.reference = ReferenceKind::MacroParticle;
    else if (ref == "grid_1d")
        sw.reference = ReferenceKind::Grid1D;
    else
        invalid("sweep.reference", "unknown reference '" + ref + "'");
    if (sw.reference == ReferenceKind::Grid1D && !sw.base.grid)
        invalid("sweep.reference", "grid_1d needs a [grid] table");
    if (sw.reference == ReferenceKind::Analytic && !sw.base.kernel_matrix().is_zero())
        invalid("sweep.reference", "the analytic reference is available for zero kernels only");
    sw.modulated_energy = get_bool(s, "sweep", "modulated_energy", false);
    if (sw.modulated_energy && !sw.base.grid)
        invalid("sweep.modulated_energy", "needs a [grid] table");
    long long fw = get_integer(s, "sweep", "fit_window", 1);
    if (fw < 1)
        invalid("sweep.fit_window", "must be at least 1");
    sw.fit_window = static_cast<std::size_t>(fw);
    if (s.contains("synthetic")) {
        const json& syn = s.at("synthetic");
        check_keys(syn, "sweep.synthetic", {"coefficient", "exponent"});
        sw.synthetic = std::make_pair(get_number(syn, "sweep.synthetic", "coefficient"),
                                      get_number(syn, "sweep.synthetic", "exponent"));
    }
    if (sw.base.dynamics == Dynamics::FirstOrder)
        invalid("dynamics.kind", "sweeps compare second-order or kinetic runs against a reference");
    return sw;
}

} // namespace kinswarm
