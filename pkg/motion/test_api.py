"""
Tests for the World Motion API
"""
import json

from django.contrib.auth import get_user_model
from django.test import TestCase

from motion.formats import dumps
from motion.models import APIKey, EvaluationRun
from motion.pipeline import synth_files
from motion.synth import SynthConfig, synth_sequence

User = get_user_model()


def synth_payloads(seed, length, camera_mode='orbit'):
    """motion, camera and prediction files of a synthetic walk as JSON-ready dicts"""
    files = synth_files(synth_sequence(seed, SynthConfig(length=length, camera_mode=camera_mode)))
    return tuple(json.loads(dumps(f)) for f in files)


class APIKeyModelTests(TestCase):
    """Test the APIKey model"""

    def setUp(self):
        self.user = User.objects.create_user(
            username='testuser',
            password='testpass123'
        )

    def test_create_api_key(self):
        """Test creating an API key"""
        api_key = APIKey.objects.create(
            name="Benchmark Runner",
            created_by=self.user
        )
        self.assertIsNotNone(api_key.key)
        self.assertEqual(len(api_key.key), 64)
        self.assertTrue(api_key.is_active)

    def test_api_key_string_representation(self):
        """Test the API key string representation"""
        api_key = APIKey.objects.create(name="Capture Rig", is_active=True)
        self.assertEqual(str(api_key), "Capture Rig (Active)")

        api_key.is_active = False
        api_key.save()
        self.assertEqual(str(api_key), "Capture Rig (Inactive)")

    def test_api_key_unique(self):
        """Test that API keys are unique"""
        key1 = APIKey.objects.create(name="App 1")
        key2 = APIKey.objects.create(name="App 2")
        self.assertNotEqual(key1.key, key2.key)


class APIAuthenticationTests(TestCase):
    """Test API authentication"""

    def setUp(self):
        self.api_key = APIKey.objects.create(name="Test App", is_active=True)

    def test_health_check_no_auth_required(self):
        """Test that health check endpoint doesn't require authentication"""
        response = self.client.get('/api/health')
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json(), {"message": "API is running"})

    def test_api_requires_authentication(self):
        """Test that API endpoints require authentication"""
        response = self.client.get('/api/evaluations')
        self.assertEqual(response.status_code, 401)

    def test_api_with_valid_key(self):
        """Test API access with valid API key"""
        headers = {'HTTP_AUTHORIZATION': f'Bearer {self.api_key.key}'}
        response = self.client.get('/api/evaluations', **headers)
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json(), [])

    def test_api_with_invalid_key(self):
        """Test API access with invalid API key"""
        headers = {'HTTP_AUTHORIZATION': 'Bearer invalid_key_12345'}
        response = self.client.get('/api/evaluations', **headers)
        self.assertEqual(response.status_code, 401)

    def test_api_with_inactive_key(self):
        """Test API access with inactive API key"""
        self.api_key.is_active = False
        self.api_key.save()

        headers = {'HTTP_AUTHORIZATION': f'Bearer {self.api_key.key}'}
        response = self.client.get('/api/evaluations', **headers)
        self.assertEqual(response.status_code, 401)

    def test_api_key_last_used_updated(self):
        """Test that last_used_at is updated when API key is used"""
        self.assertIsNone(self.api_key.last_used_at)

        headers = {'HTTP_AUTHORIZATION': f'Bearer {self.api_key.key}'}
        self.client.get('/api/evaluations', **headers)

        self.api_key.refresh_from_db()
        self.assertIsNotNone(self.api_key.last_used_at)


class RecoverAPITests(TestCase):
    """Test the recovery endpoint"""

    @classmethod
    def setUpTestData(cls):
        cls.motion, cls.camera, cls.prediction = synth_payloads(seed=8, length=40)

    def setUp(self):
        self.api_key = APIKey.objects.create(name="Test App")
        self.headers = {'HTTP_AUTHORIZATION': f'Bearer {self.api_key.key}'}

    def post(self, data):
        return self.client.post('/api/recover', data=data, content_type='application/json', **self.headers)

    def test_recover_motion(self):
        """Test recovering a world motion via API"""
        response = self.post({'prediction': self.prediction, 'camera': self.camera})

        self.assertEqual(response.status_code, 200)
        json_data = response.json()
        self.assertEqual(json_data['version'], 'gvmotion/1')
        self.assertEqual(len(json_data['root_orientation']), 40)
        self.assertEqual(json_data['gravity'], [0.0, 1.0, 0.0])
        self.assertEqual(json_data['root_translation'][0], [0.0, 0.0, 0.0])

    def test_recover_and_refine(self):
        """Test recovery with stationary-joint refinement"""
        response = self.post({'prediction': self.prediction, 'camera': self.camera, 'refine': True})
        self.assertEqual(response.status_code, 200)
        self.assertEqual(len(response.json()['root_translation']), 40)

    def test_recover_unsupported_version(self):
        """Test that a wrong file version is a 400 with the error kind"""
        prediction = dict(self.prediction, version='gvmotion/0')
        response = self.post({'prediction': prediction, 'camera': self.camera})

        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()['error'], 'VersionUnsupported')
        self.assertIn('gvmotion/0', response.json()['details'])

    def test_recover_frame_mismatch(self):
        """Test that a camera track of another length is rejected"""
        camera = dict(self.camera, relative=self.camera['relative'][:30], world_to_camera=self.camera['world_to_camera'][:30])
        response = self.post({'prediction': self.prediction, 'camera': camera})

        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()['error'], 'LengthMismatch')

    def test_recover_bad_quaternion(self):
        """Test that a non-unit quaternion names its frame"""
        prediction = dict(self.prediction, gamma_gv=[list(q) for q in self.prediction['gamma_gv']])
        prediction['gamma_gv'][5] = [1.1, 0.0, 0.0, 0.0]
        response = self.post({'prediction': prediction, 'camera': self.camera})

        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()['error'], 'NormViolation')
        self.assertIn('frame 5', response.json()['details'])

    def test_recover_missing_camera(self):
        """Test that request validation rejects a missing camera"""
        response = self.post({'prediction': self.prediction})
        self.assertEqual(response.status_code, 422)

    def test_recover_requires_authentication(self):
        """Test that recovery needs an API key"""
        response = self.client.post('/api/recover', data={'prediction': self.prediction, 'camera': self.camera},
                                    content_type='application/json')
        self.assertEqual(response.status_code, 401)


class EvaluateAPITests(TestCase):
    """Test evaluation endpoints"""

    @classmethod
    def setUpTestData(cls):
        cls.motion, _, _ = synth_payloads(seed=9, length=30, camera_mode='static')
        cls.other, _, _ = synth_payloads(seed=10, length=30, camera_mode='static')
        cls.short, _, _ = synth_payloads(seed=9, length=20, camera_mode='static')

    def setUp(self):
        self.api_key = APIKey.objects.create(name="Test App")
        self.headers = {'HTTP_AUTHORIZATION': f'Bearer {self.api_key.key}'}

    def post(self, data):
        return self.client.post('/api/evaluate', data=data, content_type='application/json', **self.headers)

    def test_evaluate_and_store(self):
        """Test that an evaluation is stored and returned with its report"""
        response = self.post({'prediction': self.other, 'reference': self.motion, 'label': 'seed-10',
                              'segment_len': 10})

        self.assertEqual(response.status_code, 201)
        json_data = response.json()
        self.assertEqual(json_data['label'], 'seed-10')
        self.assertEqual(json_data['n_frames'], 30)
        self.assertEqual(json_data['source'], 'api')
        self.assertGreater(json_data['report']['wa_mpjpe_100_mm'], 0.0)
        self.assertEqual(json_data['report']['segment_len'], 10)

        # Verify in database
        run = EvaluationRun.objects.get(id=json_data['id'])
        self.assertEqual(run.api_key, self.api_key)
        self.assertEqual(run.segment_len, 10)

    def test_evaluate_without_saving(self):
        """Test that save=false returns the bare report"""
        response = self.post({'prediction': self.motion, 'reference': self.motion, 'save': False})

        self.assertEqual(response.status_code, 200)
        json_data = response.json()
        self.assertEqual(json_data['protocol'], 'gvmotion-eval/1')
        self.assertAlmostEqual(json_data['mpjpe_mm'], 0.0, places=9)
        self.assertIn('wa_mpjpe_100_mm', json_data['definitions'])
        self.assertEqual(EvaluationRun.objects.count(), 0)

    def test_evaluate_frame_mismatch(self):
        """Test that mismatched lengths give a 400 naming both counts"""
        response = self.post({'prediction': self.short, 'reference': self.motion})

        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()['error'], 'LengthMismatch')
        self.assertIn('20', response.json()['details'])
        self.assertIn('30', response.json()['details'])
        self.assertEqual(EvaluationRun.objects.count(), 0)

    def test_evaluate_short_segments(self):
        """Test that one-frame segments are refused"""
        response = self.post({'prediction': self.motion, 'reference': self.motion, 'segment_len': 1})
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()['error'], 'BadConfig')

    def test_evaluate_zero_segment_len_is_refused(self):
        """Test that an explicit segment_len of 0 is rejected rather than replaced by the default"""
        response = self.post({'prediction': self.motion, 'reference': self.motion, 'segment_len': 0})
        self.assertEqual(response.status_code, 400)
        self.assertEqual(response.json()['error'], 'BadConfig')
        self.assertIn('got 0', response.json()['details'])
        self.assertEqual(EvaluationRun.objects.count(), 0)

    def test_list_evaluations(self):
        """Test listing stored runs with limit and protocol filters"""
        for label in ('first', 'second', 'third'):
            self.post({'prediction': self.other, 'reference': self.motion, 'label': label})

        response = self.client.get('/api/evaluations?limit=2', **self.headers)
        self.assertEqual(response.status_code, 200)
        json_data = response.json()
        self.assertEqual(len(json_data), 2)
        self.assertEqual(json_data[0]['label'], 'third')

        response = self.client.get('/api/evaluations?protocol=other/1', **self.headers)
        self.assertEqual(response.json(), [])

    def test_get_evaluation(self):
        """Test retrieving a stored run"""
        created = self.post({'prediction': self.other, 'reference': self.motion, 'label': 'only'}).json()

        response = self.client.get(f"/api/evaluations/{created['id']}", **self.headers)
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.json()['label'], 'only')
        self.assertEqual(response.json()['report'], created['report'])

    def test_get_missing_evaluation(self):
        """Test retrieving a non-existent run"""
        response = self.client.get('/api/evaluations/99999', **self.headers)
        self.assertEqual(response.status_code, 404)
