from ecoacc.core.planner import PlanningContext, PolicyMap, query_policy, solve_dp
from ecoacc.core.vehicle import RouteSpec, State, build_route

__all__ = ["PlanningContext", "PolicyMap", "RouteSpec", "State", "build_route", "query_policy", "solve_dp"]
