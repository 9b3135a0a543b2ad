#include "ifc/lattice.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <iterator>

namespace ifc {

std::optional<TwoPoint> TwoPoint::parse(std::string_view s) {
    if (s == "bot") return bot();
    if (s == "top") return top();
    return std::nullopt;
}

std::string to_string(TwoPoint l) { return l.is_top() ? "top" : "bot"; }

PrinSet::PrinSet(std::initializer_list<Principal> ps) : PrinSet(of(std::vector<Principal>(ps))) {}

PrinSet PrinSet::of(std::vector<Principal> ps) {
    std::sort(ps.begin(), ps.end());
    ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
    PrinSet s;
    s.elems_ = std::move(ps);
    return s;
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

std::optional<PrinSet> PrinSet::parse(std::string_view s) {
    s = trim(s);
    if (s.size() < 2 || s.front() != '{' || s.back() != '}') return std::nullopt;
    s = trim(s.substr(1, s.size() - 2));
    std::vector<Principal> ps;
    while (!s.empty()) {
        auto comma = s.find(',');
        std::string_view tok = trim(s.substr(0, comma));
        Principal p = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), p);
        if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size() || p < 0)
            return std::nullopt;
        ps.push_back(p);
        if (comma == std::string_view::npos) break;
        s = s.substr(comma + 1);
        if (s.empty()) return std::nullopt;
    }
    return of(std::move(ps));
}

bool PrinSet::contains(Principal p) const {
    return std::binary_search(elems_.begin(), elems_.end(), p);
}

PrinSet join(const PrinSet& a, const PrinSet& b) {
    PrinSet r;
    r.elems_.reserve(a.elems_.size() + b.elems_.size());
    std::set_union(a.elems_.begin(), a.elems_.end(), b.elems_.begin(), b.elems_.end(),
                   std::back_inserter(r.elems_));
    return r;
}

bool flows(const PrinSet& a, const PrinSet& b) {
    return std::includes(b.elems_.begin(), b.elems_.end(), a.elems_.begin(), a.elems_.end());
}

std::string to_string(const PrinSet& l) {
    std::string s = "{";
    for (std::size_t i = 0; i < l.elements().size(); ++i) {
        if (i) s += ',';
        s += std::to_string(l.elements()[i]);
    }
    return s + "}";
}

}  // namespace ifc
