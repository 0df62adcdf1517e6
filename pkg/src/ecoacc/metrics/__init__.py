from ecoacc.metrics.energy import EpisodeMetrics, episode_metrics, mpge

__all__ = ["EpisodeMetrics", "episode_metrics", "mpge"]
