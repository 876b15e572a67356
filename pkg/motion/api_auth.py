"""
Bearer-key authentication for the motion API
"""
from django.utils import timezone
from ninja.security import HttpBearer
from .models import APIKey


class APIKeyAuth(HttpBearer):
    """
    Expects Authorization header: Bearer <api_key>
    """

    def authenticate(self, request, token):
        """Return the active APIKey for the token and stamp last_used_at, else None"""
        try:
            api_key = APIKey.objects.get(key=token, is_active=True)
        except APIKey.DoesNotExist:
            return None
        api_key.last_used_at = timezone.now()
        api_key.save(update_fields=['last_used_at'])
        return api_key
