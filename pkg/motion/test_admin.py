"""
Tests for the admin views of stored evaluations
"""
from django.contrib.auth import get_user_model
from django.test import TestCase

from motion.admin import _metric_badge
from motion.models import EvaluationRun

User = get_user_model()


class MetricBadgeTests(TestCase):
    """Test metric badges"""

    def test_badge_colours(self):
        """Test green, amber, red and unavailable badges"""
        self.assertIn('#10b981', _metric_badge(50.0, 100.0, 200.0, 'mm'))
        self.assertIn('#f59e0b', _metric_badge(150.0, 100.0, 200.0, 'mm'))
        self.assertIn('#ef4444', _metric_badge(250.0, 100.0, 200.0, 'mm'))
        self.assertIn('n/a', _metric_badge(None, 100.0, 200.0, 'mm'))
        self.assertIn('150.0 mm', _metric_badge(150.0, 100.0, 200.0, 'mm'))


class EvaluationRunAdminTests(TestCase):
    """Test the evaluation changelist"""

    def setUp(self):
        self.admin = User.objects.create_superuser(username='admin', password='adminpass123', email='a@example.org')
        self.client.force_login(self.admin)
        report = {'protocol': 'gvmotion-eval/1', 'segment_len': 100, 'wa_mpjpe_100_mm': 82.5,
                  'rte_percent': None, 'foot_sliding_mm': 21.0, 'unavailable': ['rte_percent']}
        self.run = EvaluationRun.record(report, n_frames=300, label='walk-7')

    def test_changelist_shows_badges(self):
        """Test that the changelist renders metric badges"""
        response = self.client.get('/admin/motion/evaluationrun/')
        self.assertEqual(response.status_code, 200)
        self.assertContains(response, 'walk-7')
        self.assertContains(response, '82.5 mm')
        self.assertContains(response, 'n/a')

    def test_change_view(self):
        """Test that a stored run opens in the admin"""
        response = self.client.get(f'/admin/motion/evaluationrun/{self.run.id}/change/')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(str(self.run).split(' - ')[0], 'walk-7')
