#include "rdmpc/exchange.hpp"

#include <algorithm>
#include <string>

#include "rdmpc/errors.hpp"

namespace rdmpc {

const char* to_string(MessageKind k) {
    switch (k) {
        case MessageKind::Nominal: return "nominal";
        case MessageKind::Deviation: return "deviation";
        case MessageKind::Sensitivities: return "sensitivities";
        case MessageKind::Contract: return "contract";
    }
    return "unknown";
}

bool Contract::covers(int interval) const {
    return interval >= first_interval && interval < first_interval + stages();
}

const Vec& Contract::lo_at(int interval) const {
    if (!covers(interval))
        throw MissingNeighborData("contract of " + std::to_string(subsystem) +
                                  " does not cover interval " + std::to_string(interval));
    return lo[interval - first_interval];
}

const Vec& Contract::hi_at(int interval) const {
    if (!covers(interval))
        throw MissingNeighborData("contract of " + std::to_string(subsystem) +
                                  " does not cover interval " + std::to_string(interval));
    return hi[interval - first_interval];
}

bool Contract::valid() const {
    if (lo.size() != hi.size()) return false;
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (lo[i].size() != hi[i].size() || (lo[i].array() > hi[i].array()).any()) return false;
    return true;
}

Contract Contract::for_receiver(const SubsystemModel& model, int receiver) const {
    Contract c = *this;
    for (std::size_t i = 0; i < lo.size(); ++i) {
        c.lo[i] = outgoing_coupling(model, lo[i], receiver);
        c.hi[i] = outgoing_coupling(model, hi[i], receiver);
    }
    return c;
}

Contract Contract::degenerate(int subsystem, const Vec& z, int first_interval, int stages,
                              double dt) {
    Contract c;
    c.subsystem = subsystem;
    c.first_interval = first_interval;
    c.dt = dt;
    c.lo.assign(stages, z);
    c.hi.assign(stages, z);
    return c;
}

Bus::Bus(const std::map<int, std::vector<int>>& neighbors) {
    for (const auto& [id, ns] : neighbors) neighbors_[id] = std::set<int>(ns.begin(), ns.end());
}

void Bus::post(Message message) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = neighbors_.find(message.sender);
    if (it == neighbors_.end())
        throw TopologyViolation("unregistered sender " + std::to_string(message.sender));
    if (message.sender == message.receiver || !it->second.count(message.receiver))
        throw TopologyViolation("subsystem " + std::to_string(message.receiver) +
                                " is not a neighbor of " + std::to_string(message.sender));
    Key key{message.round, message.receiver, message.sender, static_cast<int>(message.kind())};
    auto [pos, inserted] = inbox_.insert_or_assign(key, std::move(message));
    if (!inserted) ++duplicates_;
}

std::vector<Message> Bus::collect(int receiver, long round, const std::vector<MessageKind>& kinds) {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = neighbors_.find(receiver);
    if (it == neighbors_.end())
        throw TopologyViolation("unregistered receiver " + std::to_string(receiver));
    std::vector<MessageKind> sorted = kinds;
    std::sort(sorted.begin(), sorted.end());
    std::vector<Message> out;
    for (int sender : it->second) {
        for (MessageKind kind : sorted) {
            auto m = inbox_.find(Key{round, receiver, sender, static_cast<int>(kind)});
            if (m == inbox_.end())
                throw MissingNeighborData("no " + std::string(to_string(kind)) + " message from " +
                                          std::to_string(sender) + " to " +
                                          std::to_string(receiver) + " in round " +
                                          std::to_string(round));
            out.push_back(m->second);
        }
    }
    return out;
}

void Bus::close_round(long round) {
    std::lock_guard<std::mutex> lock(mutex_);
    for (auto it = inbox_.begin(); it != inbox_.end();) {
        if (std::get<0>(it->first) <= round) it = inbox_.erase(it);
        else ++it;
    }
}

int Bus::duplicates() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return duplicates_;
}

}  // namespace rdmpc
