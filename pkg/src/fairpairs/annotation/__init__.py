from .battery import Battery, Question, get_battery, battery_payload
from .service import (
    AnnotationService,
    AnnotationError,
    CampaignExhausted,
    IncompleteSubmission,
    QualificationItem,
    AttentionItem,
)

__all__ = [
    "Battery",
    "Question",
    "get_battery",
    "battery_payload",
    "AnnotationService",
    "AnnotationError",
    "CampaignExhausted",
    "IncompleteSubmission",
    "QualificationItem",
    "AttentionItem",
]
