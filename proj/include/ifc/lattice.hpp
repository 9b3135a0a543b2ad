#pragma once

#include <compare>
#include <concepts>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ifc {

// The ordering operators on label types are a total order used for container
// keys only; the security order is flows().
template <class L>
concept Lattice = std::totally_ordered<L> && requires(const L& a, const L& b) {
    { L::bot() } -> std::same_as<L>;
    { join(a, b) } -> std::same_as<L>;
    { flows(a, b) } -> std::same_as<bool>;
    { to_string(a) } -> std::same_as<std::string>;
    { L::parse(std::string_view{}) } -> std::same_as<std::optional<L>>;
};

class TwoPoint {
public:
    constexpr TwoPoint() = default;
    static constexpr TwoPoint bot() { return TwoPoint(false); }
    static constexpr TwoPoint top() { return TwoPoint(true); }
    static std::optional<TwoPoint> parse(std::string_view s);

    constexpr bool is_top() const { return high_; }
    auto operator<=>(const TwoPoint&) const = default;

private:
    constexpr explicit TwoPoint(bool high) : high_(high) {}
    bool high_ = false;
};

inline TwoPoint join(TwoPoint a, TwoPoint b) {
    return a.is_top() || b.is_top() ? TwoPoint::top() : TwoPoint::bot();
}
inline bool flows(TwoPoint a, TwoPoint b) { return !a.is_top() || b.is_top(); }
std::string to_string(TwoPoint l);

using Principal = std::int64_t;

// Finite set of non-negative principals, stored sorted and duplicate-free.
class PrinSet {
public:
    PrinSet() = default;
    PrinSet(std::initializer_list<Principal> ps);
    static PrinSet bot() { return PrinSet(); }
    static PrinSet of(std::vector<Principal> ps);
    static std::optional<PrinSet> parse(std::string_view s);

    const std::vector<Principal>& elements() const { return elems_; }
    bool contains(Principal p) const;
    std::size_t size() const { return elems_.size(); }

    auto operator<=>(const PrinSet&) const = default;

    friend PrinSet join(const PrinSet& a, const PrinSet& b);
    friend bool flows(const PrinSet& a, const PrinSet& b);

private:
    std::vector<Principal> elems_;
};

std::string to_string(const PrinSet& l);

static_assert(Lattice<TwoPoint>);
static_assert(Lattice<PrinSet>);

}  // namespace ifc
